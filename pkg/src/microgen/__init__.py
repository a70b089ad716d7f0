"""Multi-phase 3D microstructure toolkit.

Generates n-phase voxel microstructures with a volumetric DC-GAN
(including periodic and arbitrarily large volumes) and characterizes
any labelled voxel grid by morphological, statistical and transport
metrics.
"""

__version__ = "0.1.0"

from .voxel import (
    VoxelGrid,
    OneHotGrid,
    SubvolumeSpec,
    one_hot_encode,
    decode,
    confidence_map,
    extract_subvolumes,
    iter_subvolumes,
    subvolume_count,
    tile,
)
from .volio import (
    FormatError,
    read_mgv1,
    write_mgv1,
    read_mgf1,
    write_mgf1,
    read_text_volume,
    read_raw_grey,
)
from .metrics import (
    MetricReport,
    TpcfCurve,
    volume_fraction,
    volume_fractions,
    specific_surface_area,
    interface_face_count,
    tpb_density,
    tpb_edge_count,
    tpcf,
    delta_ssa,
    compute_report,
    aggregate_stats,
)
from .transport import (
    TransportResult,
    FluxField,
    percolates,
    solve_diffusion,
    export_flux_map,
)

__all__ = [
    "VoxelGrid", "OneHotGrid", "SubvolumeSpec",
    "one_hot_encode", "decode", "confidence_map",
    "extract_subvolumes", "iter_subvolumes", "subvolume_count", "tile",
    "FormatError", "read_mgv1", "write_mgv1", "read_mgf1", "write_mgf1",
    "read_text_volume", "read_raw_grey",
    "MetricReport", "TpcfCurve", "volume_fraction", "volume_fractions",
    "specific_surface_area", "interface_face_count",
    "tpb_density", "tpb_edge_count", "tpcf", "delta_ssa",
    "compute_report", "aggregate_stats",
    "TransportResult", "FluxField", "percolates", "solve_diffusion",
    "export_flux_map",
]
