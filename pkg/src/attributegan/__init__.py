"""attributegan: multi-attribute conditional image synthesis.

A conditional GAN with linear-complexity attention, skip-layer excitation,
conditional contrastive learning and projection discrimination, plus the
evaluation metrics (Fréchet distance over deep features, per-attribute
prediction error) and a procedural synthetic dataset generator that makes
attribute controllability verifiable end to end.
"""

from .attention import (
    AttentionConfig,
    AttentionProjections,
    EfficientAttention,
    attention_linear,
    attention_quadratic,
)
from .contrastive import (
    ContrastiveHead,
    LabelBatch,
    conditional_contrastive_loss,
    loss_reference,
)
from .discriminator import (
    Discriminator,
    DiscriminatorOutput,
    DiscriminatorSpec,
    hinge_d_loss,
    hinge_g_loss,
    reconstruction_loss,
)
from .errors import (
    CapacityError,
    ConfigurationError,
    DataError,
    NumericError,
    UsageError,
    ValidationError,
)
from .evaluation import (
    AttributePredictor,
    FeatureExtractor,
    GaussianStats,
    attribute_error,
    compute_fid,
    fit_gaussian,
    frechet_distance,
    get_extractor,
    train_attribute_predictor,
)
from .generator import Generator, GeneratorSpec
from .schema import (
    AttributeCombination,
    AttributeDefinition,
    AttributeSchema,
    ManifestEntry,
    combination_frequencies,
    decode_one_hot,
    default_schema,
    encode_one_hot,
    filter_rare_combinations,
    normalize_levels,
)
from .training import (
    GeneratorEma,
    ImageDataset,
    LossReport,
    TrainingConfig,
    TrainingDivergedError,
    d_step,
    g_step,
    train,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
