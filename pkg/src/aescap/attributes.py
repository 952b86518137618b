"""Aesthetic attribute identifiers and the source-to-merged mapping.

A fully annotated teacher corpus labels seven attributes; the merged set
used for modelling has five: depth-of-field folds into focus, and general
impression folds into subject, balancing per-attribute image counts.
"""

from __future__ import annotations

# Source attributes carried by fully annotated (teacher-shaped) corpora.
COLOR_LIGHTING = "color_lighting"
COMPOSITION_SRC = "composition"
DEPTH_OF_FIELD = "depth_of_field"
FOCUS = "focus"
GENERAL_IMPRESSION = "general_impression"
SUBJECT_OF_PHOTO = "subject_of_photo"
USE_OF_CAMERA_SRC = "use_of_camera"

SOURCE_ATTRIBUTES = (
    COLOR_LIGHTING,
    COMPOSITION_SRC,
    DEPTH_OF_FIELD,
    FOCUS,
    GENERAL_IMPRESSION,
    SUBJECT_OF_PHOTO,
    USE_OF_CAMERA_SRC,
)

# Merged attributes used by the model and weakly annotated corpora.
COLOR_AND_LIGHTING = "color_and_lighting"
COMPOSITION = "composition"
DEPTH_AND_FOCUS = "depth_and_focus"
IMPRESSION_AND_SUBJECT = "impression_and_subject"
USE_OF_CAMERA = "use_of_camera"

ATTRIBUTES = (
    COLOR_AND_LIGHTING,
    COMPOSITION,
    DEPTH_AND_FOCUS,
    IMPRESSION_AND_SUBJECT,
    USE_OF_CAMERA,
)

# Total over the source set: every source attribute maps to a merged one.
MERGE_MAP: dict[str, str] = {
    COLOR_LIGHTING: COLOR_AND_LIGHTING,
    COMPOSITION_SRC: COMPOSITION,
    DEPTH_OF_FIELD: DEPTH_AND_FOCUS,
    FOCUS: DEPTH_AND_FOCUS,
    GENERAL_IMPRESSION: IMPRESSION_AND_SUBJECT,
    SUBJECT_OF_PHOTO: IMPRESSION_AND_SUBJECT,
    USE_OF_CAMERA_SRC: USE_OF_CAMERA,
}

DISPLAY_NAMES = {
    COLOR_AND_LIGHTING: "Color and Lighting",
    COMPOSITION: "Composition",
    DEPTH_AND_FOCUS: "Depth and Focus",
    IMPRESSION_AND_SUBJECT: "Impression and Subject",
    USE_OF_CAMERA: "Use of Camera",
    COLOR_LIGHTING: "Color Lighting",
    DEPTH_OF_FIELD: "Depth of Field",
    FOCUS: "Focus",
    GENERAL_IMPRESSION: "General Impression",
    SUBJECT_OF_PHOTO: "Subject of Photo",
}


def merge_attribute(source: str) -> str:
    """Map a source attribute to its merged attribute (merged ids pass through)."""
    if source in MERGE_MAP:
        return MERGE_MAP[source]
    if source in ATTRIBUTES:
        return source
    raise KeyError(f"unknown attribute {source!r}")


def is_known_attribute(name: str) -> bool:
    return name in ATTRIBUTES or name in SOURCE_ATTRIBUTES
