"""Layer-wise representational similarity from dumped activations."""

__version__ = "0.1.0"

from .activation_store import (  # noqa: E402
    ActivationManifest,
    ActivationSet,
    ActivationTensor,
    FeatureMatrix,
    flatten,
    load_set,
    load_tensor,
    save_set,
    save_tensor,
)
from .activation_stats import layer_stats, model_stats  # noqa: E402
from .analysis import compare_sets, layer_curve, layer_matrix  # noqa: E402
from .similarity import (  # noqa: E402
    center_columns,
    cka_from_grams,
    gram_linear,
    linear_cka,
    mean_distance,
    pwcca,
    svcca,
)
from .topology import NetworkTopology, region_mean, yolov3_topology  # noqa: E402
