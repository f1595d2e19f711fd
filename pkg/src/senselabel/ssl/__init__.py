"""Self-supervised contrastive pre-training (SimCLR-style and TFC)."""
from .augment import AugmentationSpec, augment, augment_spectrum, augment_values, frequency_view
from .layers import ConvEncoder, EncoderConfig, MLP
from .losses import TfcTerms, nt_xent_loss, pair_distance, tfc_loss_terms
from .models import SimclrModel, TfcModel
from .train import (
    ContrastiveConfig,
    TrainingResult,
    build_model,
    encode,
    load_model,
    pretrain,
    save_model,
    tfc_losses,
    tfc_views,
)
