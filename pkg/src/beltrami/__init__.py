"""Curl eigenvalue solver on convex domains via the projected Biot-Savart operator.

Subpackages:
    quadrature  -- deterministic sphere quadrature
    body        -- support-function representation of convex bodies
    grid        -- staggered voxel grids, Leray projection
    spectral    -- projected Biot-Savart operator and eigenvalue extraction
    bounds      -- closed-form eigenvalue bounds and the ball reference
    shapeopt    -- shape optimization of |Omega|^(1/3) * mu1
    gamma       -- operator-norm distance between subdomains of a box
    cli         -- batch command-line front end
"""

__version__ = "0.1.0"
