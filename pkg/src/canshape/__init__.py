"""canshape: learn the geometric shape of ambient CAN traffic, flag departures.

The pipeline: decode frames into 16-bit byte-pair signals, group signals
into physical subsystems by spectral co-clustering of their correlation
matrix, fit a landmark diffusion-map manifold per cluster, then score live
traffic with two online statistics — distance from the manifold and the
jump between consecutive embeddings. A latent-variable simulator generates
realistic multi-state captures and attack scenarios for desk-scale work.
"""

__version__ = "0.1.0"

from .can_codec import (
    BadHex,
    BytePairId,
    CanFrame,
    CodecError,
    MalformedLine,
    PayloadTooLong,
    decompose,
    format_log_line,
    parse_log_line,
    read_log,
    reassemble,
    write_log,
)
from .pipeline import (
    CanonicalSeries,
    ConstantSeries,
    EmptyCapture,
    LengthMismatch,
    Observation,
    ObservationStats,
    PipelineError,
    Scaler,
    StateCapture,
    TooShort,
    UnknownMember,
    assemble_interpolated,
    constant_filter,
    extract_series,
    fit_scaler,
    interpolate_to_length,
    observation_stream,
)
from .cocluster import (
    CanonicalId,
    CoClusterModel,
    CorrelationMatrix,
    DegenerateRow,
    KMeansNoConverge,
    cluster_heatmap_order,
    correlation_matrix,
    reorder_matrix,
    spectral_cocluster,
)
from .diffusion import (
    DiffusionModel,
    DimensionMismatch,
    EmbeddedPoint,
    NoLinearRegion,
    RankCollapse,
    ZeroKernelRow,
    embed,
    embed_many,
    fit,
    kernel,
    markov_residuals,
    select_gamma,
)
from .detect import (
    Alert,
    DETECTOR_CONT,
    DETECTOR_DIST,
    DetectorState,
    InsufficientHoldout,
    ManifoldIndex,
    OutOfOrder,
    Thresholds,
    TraceRow,
    bench_detect,
    calibrate,
    detect_stream,
    increment_distance,
    manifold_distance,
)
from .simulate import (
    AttackSpec,
    LatentVehicle,
    Sensor,
    StateSpec,
    UnknownTarget,
    WindowOutOfRange,
    evaluate,
    generate_ambient,
    inject_attack,
    make_constant_speed_vehicle,
    make_drive_cycle_vehicle,
)
