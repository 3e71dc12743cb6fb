import os
import sys


ENV_VERBOSE = "RSURL_VERBOSE"
BAR_LENGTH_MAX = 50


def default_verbose() -> int:
    try:
        return int(os.environ[ENV_VERBOSE])
    except KeyError:
        return 1
    except ValueError:
        raise ValueError(f"{ENV_VERBOSE} must be an integer, got '{os.environ[ENV_VERBOSE]}'")


def get_progress_bar(i, n, prefix="", suffix="", bar="█"):
    bar = bar * i + "-" * (n - i)
    return f"\r{prefix} |{bar}| {suffix}"


def progress_bar(i, n, prefix="", verbose=None):
    """In-place bar for the loop index i of n, finished with a newline after the last one."""
    if not check_verbosity(verbose):
        return

    if n == 0:
        i, n = 0, 1
    i += 1
    bar_length = min(n, BAR_LENGTH_MAX)
    filled_length = int(round(bar_length * i / float(n)))

    sys.stdout.write(get_progress_bar(i=filled_length, n=bar_length, prefix=prefix, suffix=f"({i}/{n})"))
    if i == n:
        sys.stdout.write("\n")
    sys.stdout.flush()


def print_dict(d, message=None, verbose=None):
    if message is not None:
        print2(message, verbose=verbose)

    width = max([len(str(k)) for k in d] + [1])
    for key in d:
        print2(f"{str(key):<{width}} : {d[key]}", verbose=verbose)


# General Functions
# ----------------------------------------------------------------------------------------------------------------------
def print2(*args, verbose=None,
           sep=" ", end="\n", file=None, flush=False):
    v = verbose_level_wrapper(verbose=verbose)

    if v.verbose > 0:
        args = [str(a) for a in args]
        t = "\t"*v.level
        print(f"{t}{sep.join(args)}", sep=sep, end=end, file=file, flush=flush)


def verbose_level_wrapper(verbose=None, level=None):
    """None -> the RSURL_VERBOSE default, int -> level 0, (verbose, level) tuples and Verbosity pass through."""
    if isinstance(verbose, Verbosity):
        return verbose if level is None else Verbosity(verbose=verbose.verbose, level=level)

    if isinstance(verbose, tuple):
        return Verbosity(*verbose)

    return Verbosity(verbose=default_verbose() if verbose is None else verbose,
                     level=0 if level is None else level)


def check_verbosity(verbose, threshold=0):
    return verbose_level_wrapper(verbose).verbose > threshold


class Verbosity:
    """How much to print (0 is silent) and how far to indent it (tabs)."""
    __slots__ = ("verbose", "level")

    def __init__(self, verbose=0, level=0):
        self.verbose = verbose
        self.level = level

    def __repr__(self):
        return f"(verbose: {self.verbose}, level: {self.level})"
