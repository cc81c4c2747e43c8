"""loopforge: user-guided transformation of array kernels.

A kernel is a parametric-box loop domain plus a partially ordered set of
assignment instructions. Transformations are pure functions from kernel to
kernel, driven by a declarative script; a reference interpreter certifies
that every step preserves semantics, and a static cost model counts FLOPs
and global-memory traffic of the generated device code.
"""

__version__ = "0.1.0"
