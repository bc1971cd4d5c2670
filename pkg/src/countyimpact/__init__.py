"""County-level disaster impact assessment.

Offline loss records give severity labels per county-event. Two estimators are
compared against them: supervised classifiers over land-cover transition
features, and a two-phase chat-model assessment of news and social posts.
"""

from .core import (CountyEvent, CountyRef, EventRef, GroundTruthLabels, HazardType, LossRecord,
                   PresenceLabel, Severity3, bucket_crop, bucket_presence, bucket_property)

__version__ = "0.1.0"

__all__ = [
    "CountyEvent", "CountyRef", "EventRef", "GroundTruthLabels", "HazardType", "LossRecord", "PresenceLabel",
    "Severity3", "bucket_crop", "bucket_presence", "bucket_property", "__version__",
]
