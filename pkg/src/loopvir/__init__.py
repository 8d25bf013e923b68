"""Bi-Hamiltonian structure of u_tx = u_xy u_y - u_yy u_x on the looped cotangent Virasoro algebra."""

__version__ = "0.1.0"
