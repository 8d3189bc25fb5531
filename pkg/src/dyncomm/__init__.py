"""Dynamic community detection toolkit.

Pipeline: nonnegative shared-factor decomposition of the temporal adjacency
tensor, an MLP mapping latent node features to community memberships, and
modularity-maximizing (seeded Louvain) refinement of the hard assignments.
"""

from .errors import GraphInputError, NumericsError, ParseError
from .temporal import (
    SliceAdjacency,
    TemporalGraph,
    binarized,
    from_edge_events,
    read_events_tsv,
    slice_matmul,
    slice_modularity_inputs,
    write_events_tsv,
)
from .rescal import (
    FactorModel,
    RescalConfig,
    fit,
    init_factors,
    load_factors,
    rebalanced,
    rescal_loss,
    save_factors,
    update_a,
    update_r,
)
from .mapper import (
    MapperConfig,
    MembershipSeries,
    MlpParams,
    forward,
    hard_assign,
    latent_inputs,
    mapper_gradients,
    mapper_loss,
    train,
)
from .refine import (
    PartitionSeries,
    louvain_refine,
    modularity,
    refine_series,
)
from .synth import DsbmConfig, generate, nmi

__version__ = "0.1.0"
