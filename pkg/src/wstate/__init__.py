"""Exact simulation of post-selected linear-optical W-state preparation."""

from .fock import (FockState, ModeLabel, inner_product, make_number_state, make_registry,
                   normalize, number_state, scale_add)
from .elements import (AttenuatorSpec, BeamSplitterSpec, ModeMap, PhaseShifterSpec,
                       RotatorSpec, apply_mode_map, apply_phase, apply_rotator, to_mode_map)
from .schemes import (Circuit, PerturbationSpec, SchemeParams, build, build_scheme_I,
                      build_scheme_II, build_sps_scheme, pdc_source, pdc_source_npairs,
                      sps_source)
from .postselection import (DetectionPattern, DetectorModel, PostselectionResult, project,
                            threshold_outcome_probability, trigger_select)

__version__ = "0.1.0"
