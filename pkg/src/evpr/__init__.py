"""Event-camera visual place recognition pipeline."""

from .events import (
    Event,
    EventBin,
    EventStream,
    filter_hot_pixels,
    load_events,
    parse_events,
    slice_by_count,
    slice_by_time,
)
from .reconstruct import (
    RawFrame,
    ReconParams,
    RenderedFrame,
    event_count,
    ingest_external_frames,
    normalize,
    save_frames,
    time_surface,
)
from .descriptor import (
    DescriptorSet,
    describe_frames,
    grid_descriptor,
    load_descriptors,
    save_descriptors,
)
from .similarity import Provenance, SimilarityMatrix, argmax_matches, similarity_matrix
from .seqmatch import SeqConfig, seq_match_adaptive, seq_match_baseline, zscore_dual
from .ensemble import EnsembleSet, align_members, fuse, predict
from .evaluate import (
    EvalReport,
    GeoTrack,
    bin_travel_stats,
    geo_distance,
    interpolate_positions,
    paired_t_test,
    recall_at_1,
)
from .synth import SynthParams, generate_traverse, perturb_traverse
from .pipeline import PipelineConfig, config_fingerprint, load_config, run_pipeline

__version__ = "0.1.0"
