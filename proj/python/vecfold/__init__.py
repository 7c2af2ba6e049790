"""Python interface to the vecfold clustering and projection core.

Arrays go in and out as numpy arrays; configurations are plain dicts using
the same keys as the JSON config files read by the command-line tool.
"""

from __future__ import annotations

import json
from os import PathLike
from typing import Any, Sequence

import numpy as np

from . import _core
from ._core import VecfoldError, assign, fit_curve, fit_lloyd, fit_minibatch, kmeans_pp_init, pca_fit

__version__ = _core.__version__

__all__ = [
    "VecfoldError",
    "assign",
    "default_config",
    "embed_post",
    "fit_curve",
    "fit_kmeans",
    "fit_lloyd",
    "fit_minibatch",
    "kmeans_pp_init",
    "load_config",
    "load_corpus_stats",
    "pca_fit",
    "project",
    "read_matrix",
    "render_template",
    "run_pipeline",
    "write_matrix",
    "write_synthetic_corpus",
]


def _merged(defaults: str, overrides: dict[str, Any] | None) -> str:
    config = json.loads(defaults)
    config.update(overrides or {})
    return json.dumps(config)


def default_config() -> dict[str, Any]:
    """Full pipeline configuration with every default filled in."""
    return json.loads(_core.default_config())


def load_config(path: str | PathLike[str] = "", overrides: Sequence[str] = ()) -> dict[str, Any]:
    """Defaults, then the optional config file, then ``dotted.key=value`` overrides."""
    return json.loads(_core.load_config(str(path), list(overrides)))


def fit_kmeans(data: np.ndarray, threads: int = 1, **config: Any) -> dict[str, Any]:
    """Fit k-means with restarts. Keyword arguments override the default k-means config."""
    return _core.fit_kmeans(data, _merged(_core.default_kmeans_config(), config), threads)


def project(data: np.ndarray, threads: int = 1, deterministic: bool = True, **config: Any) -> dict[str, Any]:
    """Sample rows and lay them out in 2D. Keyword arguments override the default projection config."""
    return _core.project(data, _merged(_core.default_projection_config(), config), threads, deterministic)


def render_template(post: dict[str, Any], **config: Any) -> dict[str, Any]:
    """Render one post record as an embedding prompt."""
    return json.loads(_core.render_template(json.dumps(post), _merged(_core.default_template_config(), config)))


def embed_post(
    post: dict[str, Any],
    provider: dict[str, Any] | None = None,
    template: dict[str, Any] | None = None,
) -> np.ndarray:
    """Template and embed one post. The provider defaults to the built-in stub."""
    return _core.embed_post(
        json.dumps(post),
        _merged(_core.default_template_config(), template),
        _merged(_core.default_provider(), provider),
    )


def write_matrix(path: str | PathLike[str], data: np.ndarray, ids: Sequence[str]) -> None:
    _core.write_matrix(path, data, list(ids))


def read_matrix(path: str | PathLike[str]) -> tuple[np.ndarray, list[str]]:
    return _core.read_matrix(path)


def load_corpus_stats(path: str | PathLike[str], strict: bool = False) -> dict[str, Any]:
    return json.loads(_core.load_corpus_stats(path, strict))


def write_synthetic_corpus(path: str | PathLike[str], n_posts: int = 800, seed: int = 7) -> None:
    _core.write_synthetic_corpus(path, n_posts, seed)


def run_pipeline(
    config: dict[str, Any],
    threads: int = 1,
    resume: bool = True,
    deterministic: bool = False,
    last: str = "report",
) -> dict[str, Any]:
    """Run the pipeline up to stage ``last`` and return the run manifest."""
    return json.loads(_core.run_pipeline(json.dumps(config), threads, resume, deterministic, last))
