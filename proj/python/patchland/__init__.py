"""Patch-based land cover classification toolkit.

Thin wrappers around the C++ core in ``_patchland``: scene synthesis, cube1/
lbl1 I/O, patch extraction, SVM/NN/CNN training, and full-scene classification.
"""

import json as _json

from ._patchland import (  # noqa: F401
    ConfigError,
    DataError,
    Model,
    NumericError,
    PatchDataset,
    __version__,
    compute_stats,
    exclude_bands,
    extract_patches,
    load_cube,
    load_labels,
    normalize,
    overall_accuracy,
    rbf_kernel,
    render_map,
    split_dataset,
    write_cube,
    write_labels,
)
from ._patchland import generate_scene_json as _generate_scene_json
from ._patchland import train_json as _train_json


def generate_scene(spec):
    """Generate a synthetic scene from a spec dict (or JSON string).

    Returns (cube, labels) as numpy arrays of shape (rows, cols, bands) and
    (rows, cols).
    """
    if isinstance(spec, dict):
        spec = _json.dumps(spec)
    return _generate_scene_json(spec)


def train(cube, labels, config):
    """Run the training pipeline on an in-memory scene.

    config is a dict (or JSON string) with the same schema as the CLI train
    config, minus the file paths. Returns (model, metrics) where metrics is a
    dict with overall_accuracy, confusion, train_size and test_size.
    """
    if isinstance(config, dict):
        config = _json.dumps(config)
    model, metrics_json = _train_json(cube, labels, config)
    return model, _json.loads(metrics_json)


__all__ = [
    "ConfigError",
    "DataError",
    "Model",
    "NumericError",
    "PatchDataset",
    "__version__",
    "compute_stats",
    "exclude_bands",
    "extract_patches",
    "generate_scene",
    "load_cube",
    "load_labels",
    "normalize",
    "overall_accuracy",
    "rbf_kernel",
    "render_map",
    "split_dataset",
    "train",
    "write_cube",
    "write_labels",
]
