"""Historical road network extraction from georeferenced map scans.

Contemporary road segments are sampled across their axis on a historical
map sheet; the resulting road overlap indicator (ROI) is split into
historical and recent roads by exact one-dimensional k-means.
"""

__version__ = "0.1.0"

from .geometry import (CrossSection, InvalidGeometryError, Point2D, RoadSegment, SamplingParams, SheetFootprint,
                       assign_segment_to_sheet, buffer_segment, generate_cross_sections, point_and_tangent_at,
                       polyline_length, stratify_segments)
from .raster import (AffineTransform, GeoRaster, OUT_OF_BOUNDS, load_raster, parse_world_file, sample_rgb,
                     save_raster, world_to_pixel)
from .roi import AxialImage, ROIRecord, build_axial_image, compute_roi, regularize, roi
from .ckmeans import ClusterResult, assign_historical, ckmeans, cluster_by_scope, silhouette
from .reference import (built_up_fraction, export_patch, label_from_fraction, parse_manual_labels,
                        select_bua_epoch)
from .metrics import ConfusionCounts, ROCCurve, confusion, grouped_report, prf
from .metrics import roc as roc_curve
from .temporal import cross_tabulate, length_change, roi_bivariate_histogram
