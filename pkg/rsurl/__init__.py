from . import __multiprocessing2   # must be imported before numpy

from .printing import print2, print_dict, check_verbosity  # noqa
from .time2 import tic, toc, Stopwatch  # noqa


class DivergenceError(FloatingPointError):
    """A training loss became non-finite; the last finite state was checkpointed before raising."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
