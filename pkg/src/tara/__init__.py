"""Time-aware retrieval adaptation toolkit.

Mines temporally-opposite (chiral) hard negatives from caption corpora,
trains a projection adapter on text triplets with a temperature-scaled
contrastive objective, and evaluates time-awareness with chiral retrieval
splits, binary/multiple-choice protocols, and the modality-gap statistic.
"""

from tara.corpus import (
    Caption,
    CaptionCorpus,
    ChiralLexicon,
    ChiralPair,
    CorpusError,
    default_lexicon,
    load_corpus,
    load_lexicon,
    save_corpus,
)
from tara.miner import (
    LlmClient,
    LlmClientError,
    MinedCaption,
    MinedRecord,
    MinerError,
    RewriteResult,
    VerbObject,
    extract_verb_object,
    load_lemma_table,
    load_subject_pool,
    mine_chiral,
    replace_subjects,
    rewrite_antonym_external,
    rewrite_antonym_template,
)
from tara.composer import (
    ComposerError,
    Triplet,
    TripletDataset,
    build_positive_index,
    build_temporal_triplets,
    compose,
    find_positives,
    read_dataset,
    read_triplet_pool,
    write_dataset,
)
from tara.embeddings import EmbeddingError, EmbeddingMatrix, l2_normalize, sim_matrix
from tara.embfile import EmbFileError, read_embeddings, write_embeddings
from tara.adapter import (
    AdapterGrads,
    AdapterParams,
    TrainConfig,
    TrainError,
    TrainHistory,
    forward,
    grad_check,
    infonce_loss,
    load_adapter,
    loss_and_grad,
    save_adapter,
    train,
    train_arrays,
)
from tara.estimator import EmbeddingAdapter
from tara.evaluator import (
    EvalError,
    EvalReport,
    LabeledItem,
    Query,
    RetrievalTask,
    binary_accuracy,
    build_splits,
    load_items,
    mcq_accuracy,
    mean_average_precision,
    modality_gap,
    nearest_centroid_probe,
    negation_eval,
    recall_at_k,
)
from tara.sweep import SweepError, SweepGrid, SweepRow, ablation_sweep

__version__ = "0.1.0"
