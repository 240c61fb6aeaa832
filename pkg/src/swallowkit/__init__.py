"""swallowkit: acoustic analysis and screening toolkit for swallow sounds.

The pipeline: read annotated WAV recordings, extract a 25-dimensional
acoustic descriptor per swallow segment, compare feature distributions
across groups with rank tests, inspect separability through 2-D
embeddings, and classify normal vs dysphagic swallows with a bagged
decision-tree ensemble evaluated over repeated stratified splits.
"""

from .audio_io import (
    CONSISTENCIES,
    LABELS,
    AudioSegment,
    AudioSignal,
    ManifestEntry,
    SegmentAnnotation,
    load_manifest_segments,
    parse_annotations,
    parse_manifest,
    read_wav,
    slice_segments,
    write_annotations,
    write_wav,
)
from .embed import (
    Embedding,
    TsneParams,
    export_embedding,
    joint_affinities,
    kl_divergence,
    pairwise_affinities,
    pca_fit_transform,
    standardize,
    tsne,
)
from .evaluate import (
    ConfusionMatrix,
    EvalConfig,
    EvaluationReport,
    Metrics,
    confusion,
    metrics,
    repeated_evaluation,
    stratified_split,
)
from .features import (
    FEATURE_NAMES,
    N_FEATURES,
    FeatureMatrix,
    FeatureVector,
    FrameConfig,
    MelConfig,
    extract_feature_matrix,
    extract_feature_vector,
    frame_signal,
    harmonic_ratio,
    mel_filterbank,
    mfcc,
    power_spectra,
    power_spectrum,
    short_term_energy,
    spectral_descriptors,
    zero_crossing_rate,
)
from .forest import (
    DecisionTree,
    ForestParams,
    LabeledDataset,
    RandomForest,
    Split,
    TreeNode,
    best_split,
    feature_importance,
    forest_from_dict,
    forest_to_dict,
    gini_impurity,
    load_forest,
    oob_accuracy,
    predict,
    predict_batch,
    save_forest,
    train_forest,
    train_tree,
)
from .seeding import derive_rng, derive_seed
from .stats import (
    FeatureTest,
    KruskalResult,
    chi_square_sf,
    feature_significance_table,
    kruskal_wallis,
    rank_with_ties,
    write_significance_csv,
)
from .synth import (
    SynthConfig,
    generate_feature_clusters,
    generate_segments,
    generate_synthetic_corpus,
    synth_swallow,
)

__version__ = "0.1.0"
