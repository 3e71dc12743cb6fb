from .tensor import (Tensor, Tape, Node, DimensionError, GraphError,  # noqa
                     as_tensor, backward,
                     add, sub, mul, div, neg, square, minimum,
                     tanh, relu, exp, log, clamp,
                     sum, mean, softmax, logsumexp,
                     matmul, transpose_last, reshape, concat, index)
