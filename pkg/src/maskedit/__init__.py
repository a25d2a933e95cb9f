"""Segmentation-mask-driven latent-space image editing at desk scale.

The package provides a joint image/segmentation generator, an encoder plus
iterative latent refinement for embedding images, mask-conditioned latent
optimization that realizes user-drawn segmentation edits, a reusable library
of editing vectors, a synthetic part-composed scene dataset, an evaluation
harness, and an HTTP service tying it all together.
"""

from maskedit.generator import (
    ExtendedLatent,
    GeneratorConfig,
    JointGenerator,
    JointSample,
    LatentCode,
)
from maskedit.editing import (
    EditRegion,
    EditingLossConfig,
    EditingVector,
    apply_editing_vector,
    compose_edits,
    compute_edit_region,
    editing_loss,
    learn_editing_vector,
    optimize_edit_from_scratch,
    refine_edit,
)
from maskedit.embedding import (
    EmbeddingResult,
    Encoder,
    EncoderConfig,
    RefinementConfig,
    embed_image,
    perceptual_distance,
)
from maskedit.labels import LabelSchema
from maskedit.seghead import HeadConfig, SegmentationHead, pixel_accuracy, train_head
from maskedit.vectors import VectorRecord, list_vectors, load_vector, save_vector

__all__ = [
    "EditRegion",
    "EditingLossConfig",
    "EditingVector",
    "EmbeddingResult",
    "Encoder",
    "EncoderConfig",
    "ExtendedLatent",
    "GeneratorConfig",
    "HeadConfig",
    "JointGenerator",
    "JointSample",
    "LabelSchema",
    "LatentCode",
    "RefinementConfig",
    "SegmentationHead",
    "VectorRecord",
    "apply_editing_vector",
    "compose_edits",
    "compute_edit_region",
    "editing_loss",
    "embed_image",
    "learn_editing_vector",
    "list_vectors",
    "load_vector",
    "optimize_edit_from_scratch",
    "perceptual_distance",
    "pixel_accuracy",
    "refine_edit",
    "save_vector",
    "train_head",
]
