"""Dynamic texture synthesis from spatio-temporal Gram statistics.

Extract windowed second-order feature statistics from an example video,
then generate new videos of arbitrary length whose every sliding window
matches those statistics, one frame at a time by L-BFGS pre-image search.
"""

from .container import (
    load_network,
    network_from_container,
    read_container,
    save_network_weights,
    write_container,
)
from .errors import (
    BadMagicError,
    ConsistencyError,
    DyntexError,
    FormatError,
    InvalidShapeError,
    LineSearchError,
    MissingFrameError,
    MissingMetadataError,
    MissingTensorError,
    NonDescentError,
    NumericError,
    ShapeError,
    TruncatedFileError,
    UnsupportedFormatError,
    UnsupportedVersionError,
)
from .gram import (
    GramMatrix,
    TextureStatistics,
    compute_statistics,
    concat_window,
    gram,
    load_statistics,
    save_statistics,
)
from .lbfgs import LbfgsConfig, OptimizationTrace, line_search_wolfe, minimize
from .loss import (
    LossBreakdown,
    WindowContext,
    frame_loss_grad,
    joint_loss_grad,
    layer_loss,
    make_context,
)
from .network import (
    ConvSpec,
    FeatureStack,
    LayerSpec,
    Network,
    NetworkDescriptor,
    PoolSpec,
    Preprocessing,
    backward_to_input,
    forward_features,
    load_descriptor,
    save_descriptor,
)
from .pipeline import (
    NOISE_SCALE,
    SynthesisConfig,
    generate,
    init_frames_joint,
    noise_frame,
    synthesize_frame,
)
from .vgg import BUILTIN_NETS, DEFAULT_LAYERS, builtin_descriptor, vgg19_descriptor
from .video import (
    SequenceManifest,
    Video,
    deprocess,
    preprocess,
    read_ppm,
    read_sequence,
    write_ppm,
    write_sequence,
)

__version__ = "0.1.0"
