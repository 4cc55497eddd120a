"""Relevance-driven pruning and mixed-precision quantization of dense networks."""
from .compress import (CompressionPlan, QuantizedLayer, QuantizedModel, SizeBreakdown,
                       apply_prune, assign_precision, dequantize, make_plan, model_size_bytes,
                       prune_mask, quantize_group, quantize_model, quantized_forward, top_k_masks)
from .criteria import magnitude_scores, taylor_scores
from .datagen import Dataset, generate_multi, train_test_split
from .errors import (BadMagicError, CodeRangeError, DegenerateLayerError, FormatError,
                     InvalidArgumentError, InvalidFieldError, NumericError,
                     TruncatedPayloadError, VersionMismatchError, XaiCompressError)
from .kernels import BACKEND
from .nn import (DenseLayer, DenseNet, ForwardTrace, TrainConfig, backward_grads, evaluate,
                 forward, init_net, sgd_train)
from .pipeline import (ExperimentReport, PipelineConfig, ReportRow, emit_report, prepare, repro,
                       run_comparison, run_pipeline)
from .relevance import (ImportanceScores, RelevanceRecord, aggregate_neuron_scores,
                        conservation_check, lrp_attribute, weight_relevance)
from .serialize import deserialize_model, serialize_model

__version__ = "0.1.0"
