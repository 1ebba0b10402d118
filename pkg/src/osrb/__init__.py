"""Random-binning code constructions and their exact output statistics."""

__version__ = "0.1.0"

from .probkit import (
    Alphabet,
    CapacityError,
    ConditionalPmf,
    JointPmf,
    ShapeError,
    compose,
    condition,
    conditional,
    entropy,
    entropy_conditional,
    fidelity,
    iid_extend,
    marginalize,
    mutual_information,
    total_variation,
)

__all__ = [
    "Alphabet",
    "CapacityError",
    "ConditionalPmf",
    "JointPmf",
    "ShapeError",
    "compose",
    "condition",
    "conditional",
    "entropy",
    "entropy_conditional",
    "fidelity",
    "iid_extend",
    "marginalize",
    "mutual_information",
    "total_variation",
    "__version__",
]
