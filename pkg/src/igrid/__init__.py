"""Distributed stencil computations on an implicit global staggered grid."""
from .errors import (
    BoundsError,
    ConfigError,
    ConstraintError,
    GridSizeError,
    GridStateError,
    IGridError,
    ProtocolError,
    StaggeringError,
    TransportError,
    TransportTimeout,
    WidthError,
)
from .grid import (
    GlobalGrid,
    allreduce,
    finalize_global_grid,
    gather,
    global_coord,
    global_size,
    init_global_grid,
    local_to_global,
    nx_g,
    ny_g,
    nz_g,
    owned_range,
)
from .halo import HaloSpec, halo_spec, pack, unpack, update_halo
from .overlap import hide_communication
from .topology import ProcessTopology, coords_of_rank, dims_create, rank_of_coords
from .transport import rendezvous_connect, run_inproc

__version__ = "0.1.0"
