"""Hybrid renderer: precomputed static radiance plus a path-traced
signed delta for dynamic objects and lights."""

from .adaptive import (PixelStats, QuantizedSampleMap, SampleMap,
                       boost_compensate, dither_quantize, estimate_map)
from .compositor import (FrameBuffers, MetricsReport, build_mask,
                         compose_hybrid, compute_metrics)
from .field import (FieldQuery, LearnedStaticField, OracleStaticField,
                    TrainingSet, generate_dataset, load_field, save_field, train)
from .integrators import (PathClass, PathClassTally, TraceSettings, sample_bsdf,
                          trace_additive, trace_batch, trace_delta_pss,
                          trace_reference, trace_subtractive)
from .pfm import read_pfm, write_pfm
from .render import (RenderConfig, render_delta, render_frame, render_image,
                     render_sequence)
from .rng import RandomStream, StreamKey, fork_for_scene
from .scene import (Camera, EnvironmentMap, Intersection, Material, Scene,
                    SignedEnvDelta, Sphere, Triangle, build_env_delta)
from .sceneio import load_scene, save_scene
from .scenes import BUNDLED, bundled_scene

__version__ = "0.1.0"
