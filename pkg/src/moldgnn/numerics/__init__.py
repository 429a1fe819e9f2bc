from moldgnn.numerics.autodiff import (
    Tape,
    TapeNode,
    Var,
    activation,
    add,
    concat,
    elementwise,
    matmul,
    mean_all,
    mul,
    neg,
    relu,
    reshape,
    sigmoid,
    sub,
    sum_all,
    tanh,
    transpose,
    value_of,
)
from moldgnn.numerics.linalg import sym_eigenvalues
from moldgnn.numerics.rng import Rng

__all__ = [
    "Rng",
    "Tape",
    "TapeNode",
    "Var",
    "activation",
    "add",
    "concat",
    "elementwise",
    "matmul",
    "mean_all",
    "mul",
    "neg",
    "relu",
    "reshape",
    "sigmoid",
    "sub",
    "sum_all",
    "sym_eigenvalues",
    "tanh",
    "transpose",
    "value_of",
]
