import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from faceprobe.manifest import build_manifest
from faceprobe.model import GenMethod, ProbeImage, ProbeKind, normalize_identity


@pytest.fixture
def tiny_manifest():
    """Two celebrities, two reals each, three fakes (one per method)."""
    emma = normalize_identity("Emma Watson")
    nicole = normalize_identity("Nicole Kidman")
    probes = [
        ProbeImage("r-emma-1", "mem://e1", ProbeKind.REAL, GenMethod.NOT_APPLICABLE,
                   "tiny", target=emma),
        ProbeImage("r-emma-2", "mem://e2", ProbeKind.REAL, GenMethod.NOT_APPLICABLE,
                   "tiny", target=emma),
        ProbeImage("r-nicole-1", "mem://n1", ProbeKind.REAL, GenMethod.NOT_APPLICABLE,
                   "tiny", target=nicole),
        ProbeImage("f-swap", "mem://f1", ProbeKind.FAKE, GenMethod.REPLACEMENT,
                   "tiny", target=emma, reference=nicole),
        ProbeImage("f-motion", "mem://f2", ProbeKind.FAKE, GenMethod.REENACTMENT,
                   "tiny", target=nicole, reference=emma),
        ProbeImage("f-blend", "mem://f3", ProbeKind.FAKE, GenMethod.SYNTHESIS,
                   "tiny", reference=emma, reference2=nicole),
    ]
    return build_manifest("tiny", "fixture dataset", probes,
                          {"Emma C. Watson": "Emma Watson"})
