"""Latent-class contrastive model simulation and generalization-bound auditing."""

try:
    from ._shiftbounds import *  # noqa: F401,F403  (installed layout)
except ImportError:
    from _shiftbounds import *  # noqa: F401,F403  (build-tree layout)
