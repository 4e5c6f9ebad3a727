"""Synthetic scenes and independent oracles for testing."""
from .scene import (
    DEFAULT_INTRINSICS,
    TYPICAL_IONO,
    Drive,
    DriveSet,
    FeatureDrive,
    FeatureScene,
    SyntheticScene,
    generate_drive,
    generate_feature_scene,
    heading_pose,
    trajectory,
)

__all__ = [
    "DEFAULT_INTRINSICS", "TYPICAL_IONO", "Drive", "DriveSet", "FeatureDrive", "FeatureScene",
    "SyntheticScene", "generate_drive", "generate_feature_scene", "heading_pose", "trajectory",
]
