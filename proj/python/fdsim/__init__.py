"""Federated distillation / augmentation simulator."""

from ._fdsim import *  # noqa: F401,F403
from ._fdsim import __doc__  # noqa: F401
