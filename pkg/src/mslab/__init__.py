"""mslab: numerical machinery for partial-data inversion of the magnetic
Schrodinger operator.

Submodules
----------
geometry     implicit domains, front face, slicing, Morse angles
phase_space  symbols and flows of the logarithmic weight, H_mp solver,
             symbol-level conjugation
dbar         2D Cauchy transform, contour integrals, winding numbers
cgo          complex-geometrical-optics solutions and Carleman ratios
forward      discrete magnetic Schrodinger solves and DN maps
recon        inverse pipeline: orthogonality data, holomorphic extension,
             Radon recovery, convection uniqueness
cli          batch scenario runner
"""

__version__ = "0.1.0"
