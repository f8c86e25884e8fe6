"""dforge: certified finite-stage forcing of differentiable order isomorphisms.

Subpackages group by machinery: ternary digit space and flat coding, the
box-pair slope gap, averaged-value calculus for decay kernels, represented
nonnegative layer functions with certified evaluation, the nonnegative
corrector, and the condition engine with its CLI.
"""

from dforge.rint import Decision, Enclosure, Rounder, rounder

__all__ = ["Decision", "Enclosure", "Rounder", "rounder"]
__version__ = "0.1.0"
