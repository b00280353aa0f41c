"""Shared fixtures: a small policy corpus designed so each control list
has distinctive vocabulary, each single-list item retrieves at least two
supporting snippets (enough coverage to finalize), and one item straddles
USML/CCL wording to force a conflict."""

from __future__ import annotations

import pytest

from hrptriage.agents import ItemFields
from hrptriage.config import PipelineConfig
from hrptriage.corpus import build_snapshot, ingest_document
from hrptriage.labels import ControlList
from hrptriage.orchestrator import Pipeline

USML_TEXT = """\
§ 121.1 Automatic firearms.
Automatic rifles and fully automatic firearms, including the AR-500 select
fire rifle platform manufactured by Acme Arms, are enumerated defense
articles. Silencers and sound suppressors designed for an automatic rifle
require licensing, and every automatic rifle receiver is a defense article
controlled under this category without exception.
§ 121.2 Military thermal optics.
Military thermal imaging cameras and targeting sights with protected optics
are defense articles. A thermal imaging camera qualified for weapon mounting
is controlled here, as are aiming modules built around a thermal imaging
camera core designed for combat use on military platforms.
§ 121.3 Firearms accessories.
Fire control components for the automatic rifle, including AR-500 series
trigger groups and bolt carriers produced by Acme Arms, are defense articles.
Magazines over the stated capacity for any automatic rifle and conversion
kits enabling automatic fire are likewise enumerated in this entry.
"""

NRC_TEXT = """\
§ 110.8 Nuclear equipment and material.
Gas centrifuge rotor assemblies, rotor tubes, baffles and bellows for uranium
enrichment are controlled nuclear equipment. A gas centrifuge rotor
fabricated from maraging steel or carbon fibre composite, such as the GC-9
rotor sold by Rotordyne, requires specific authorization.
§ 110.9 Enrichment plant components.
Frequency changers and inverters designed to drive a gas centrifuge rotor
cascade are controlled for export. Bellows-forming mandrels and any gas
centrifuge rotor balancing machine, including GC-9 tooling from Rotordyne,
fall under this paragraph as enrichment plant equipment.
"""

CCL_TEXT = """\
§ 774.1 Vacuum technology.
Turbomolecular vacuum pumps and high vacuum pump assemblies with specified flow
rates are dual-use items. A turbomolecular vacuum pump rated beyond the
decontrol threshold, for example the TVP-2000 turbomolecular vacuum pump from
VacTech, requires a license for certain destinations and end uses.
§ 774.2 Commercial imaging equipment.
Commercial thermal imaging cameras for industrial inspection are dual-use
items. A thermal imaging camera sold for building diagnostics is controlled
as a thermal imaging camera under this entry when its resolution exceeds the
threshold noted for consumer devices.
§ 774.3 Vacuum pump accessories.
Backing stages and magnetic bearings for a turbomolecular vacuum pump are
dual-use components. Controllers shipped with the TVP-2000 turbomolecular
vacuum pump by VacTech carry the same classification as the pump itself.
"""

EAR99_TEXT = """\
GENERAL OFFICE GOODS
Office furniture such as a desk, an office chair, lamps and ordinary shelving
is designated EAR99. An office chair, a stationery cabinet or a standard
whiteboard from OfficePro carries no listing on any control list and has no
military or nuclear application whatsoever.
CONSUMER SUPPLIES
Everyday consumer supplies are EAR99: the OC-12 office chair sold by
OfficePro, desktop printers, coffee machines and paper goods. No license is
ordinarily required to export an office chair or comparable furnishings to
most destinations.
"""

FIXTURE_DOCS = [
    ("usml-121", ControlList.USML, USML_TEXT),
    ("nrc-110", ControlList.NRC, NRC_TEXT),
    ("ccl-774", ControlList.CCL, CCL_TEXT),
    ("ear99-guide", ControlList.EAR99, EAR99_TEXT),
]

USML_ITEM = ItemFields("Acme Arms", "automatic rifle", "AR-500")
NRC_ITEM = ItemFields("Rotordyne", "gas centrifuge rotor", "GC-9")
CCL_ITEM = ItemFields("VacTech", "turbomolecular vacuum pump", "TVP-2000")
EAR_ITEM = ItemFields("OfficePro", "office chair", "OC-12")
CONFLICT_ITEM = ItemFields("OptiCorp", "thermal imaging camera", "TIC-7")
JUNK_ITEM = ItemFields("Zzz Holdings", "qqqqxxxx zzzzyyyy widget", "NOPE-0")

CLEAN_ITEMS = {
    ControlList.USML: USML_ITEM,
    ControlList.NRC: NRC_ITEM,
    ControlList.CCL: CCL_ITEM,
    ControlList.EAR99: EAR_ITEM,
}


def make_documents():
    return [
        ingest_document(text, doc_id=doc_id, control_list=control_list, source_name=doc_id)
        for doc_id, control_list, text in FIXTURE_DOCS
    ]


@pytest.fixture(scope="session")
def fixture_snapshot():
    return build_snapshot(make_documents(), created_at="2026-01-01T00:00:00+00:00")


@pytest.fixture(scope="session")
def fixture_config():
    return PipelineConfig()


@pytest.fixture()
def make_pipeline(fixture_snapshot, fixture_config, tmp_path):
    """Factory: fresh pipeline with an isolated audit root per call."""
    counter = {"n": 0}

    def factory(snapshot=None, config=None, **kwargs):
        counter["n"] += 1
        root = tmp_path / f"audit-{counter['n']}"
        return Pipeline(
            snapshot or fixture_snapshot,
            config or fixture_config,
            audit_root=root,
            **kwargs,
        )

    return factory


@pytest.fixture()
def pipeline(make_pipeline):
    return make_pipeline()
