"""Lightweight from-scratch CNN fire detection.

Training, real-time frame classification, and a complete detection-unit
pipeline that fuses vision with a smoke sensor and pushes alerts to a
webhook endpoint.
"""

from .kernels import ConvParams, DenseParams
from .network import (
    EVAL,
    TRAIN,
    LayerSpec,
    Network,
    NetworkConfig,
    activation_shape_chain,
    backward,
    build_classifier,
    classifier_config,
    forward,
)
from .modelio import load_model, save_model
from .dataio import DatasetManifest, Sample, augment, decode_ppm, load_dataset, resize_bilinear
from .training import (
    ConfusionCounts,
    CurvePoint,
    MetricsReport,
    TrainConfig,
    compute_metrics,
    evaluate,
    export_curves,
    split_train_val,
    train,
)
from .inference import BenchReport, Detection, Frame, bench_fps, classify_frame, run_stream
from .fusion import (
    AlarmCommand,
    AlarmKind,
    AlertMessage,
    FusionConfig,
    FusionState,
    SmokeReading,
    fusion_step,
    parse_sensor_stream,
    upload_snapshot,
)
from .alerts import DeliveryResult, WebhookNotifier

__version__ = "0.1.0"
