"""Report-signal analysis toolkit for "false news" user reports.

Decomposes report inaccuracy into noise types, orders content classes by
report volume, and routes reported content to moderation channels with a
gradient-boosted classifier. A behaviour-based generator supplies synthetic
platform data.
"""

__version__ = "0.1.0"
