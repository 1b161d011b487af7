"""Hierarchical explore-and-navigate stack on a deterministic 2D lidar world.

Upper layer: occupancy mapping, frontier scoring, grid planning, sparse
waypoints.  Lower layer: a bank of expert MLPs blended at the parameter
level by a gating network, running at the control rate.
"""

__version__ = "0.1.0"
