"""faceprobe: a measurement harness and defense gateway for celebrity
face-recognition web APIs probed with deepfake images."""

from .model import (
    DEFENSE_BLOCKED,
    Demographic,
    GenMethod,
    IdentityRef,
    Match,
    MetricConfig,
    Prediction,
    ProbeImage,
    ProbeKind,
    QueryRecord,
    RequestKind,
    normalize_identity,
)
from .manifest import (
    DatasetManifest,
    build_manifest,
    load_manifest,
    pair_fake_with_real,
    serialize_manifest,
)
from .metrics import (
    EvaluationReport,
    NaOutcome,
    PairedOutcome,
    Rate,
    aggregate,
    classify_na_outcome,
    compute_sic,
    eval_dhc,
    eval_dhf,
    eval_dhs,
    eval_nontargeted,
    eval_targeted,
)
from .campaign import (
    CampaignConfig,
    CampaignMode,
    FsPolicy,
    read_query_log,
    run_campaign,
    write_query_log,
)
from .pricing import PricingSchedule, default_pricing, estimate_cost
from .defense import (
    Decision,
    DefenseMode,
    DefensePolicy,
    dd1_admit,
    dd2_admit,
    defended_campaign,
    updated_success_rate,
)
from .combiner import CombinerHyper, CombinerModel, dd3_train

__version__ = "0.1.0"

__all__ = [
    "DEFENSE_BLOCKED",
    "Demographic",
    "GenMethod",
    "IdentityRef",
    "Match",
    "MetricConfig",
    "Prediction",
    "ProbeImage",
    "ProbeKind",
    "QueryRecord",
    "RequestKind",
    "normalize_identity",
    "DatasetManifest",
    "build_manifest",
    "load_manifest",
    "pair_fake_with_real",
    "serialize_manifest",
    "EvaluationReport",
    "NaOutcome",
    "PairedOutcome",
    "Rate",
    "aggregate",
    "classify_na_outcome",
    "compute_sic",
    "eval_dhc",
    "eval_dhf",
    "eval_dhs",
    "eval_nontargeted",
    "eval_targeted",
    "CampaignConfig",
    "CampaignMode",
    "FsPolicy",
    "read_query_log",
    "run_campaign",
    "write_query_log",
    "PricingSchedule",
    "default_pricing",
    "estimate_cost",
    "Decision",
    "DefenseMode",
    "DefensePolicy",
    "dd1_admit",
    "dd2_admit",
    "defended_campaign",
    "updated_success_rate",
    "CombinerHyper",
    "CombinerModel",
    "dd3_train",
]
