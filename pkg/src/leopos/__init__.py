"""Cooperative downlink positioning for multi-beam LEO networks."""

from .beamforming import (DstaResult, PositioningState, compute_sinr, dsta,
                          scb_beamformer, scbwi_snr, zf_beamformer)
from .channel import (ChannelSet, build_channel_set, channel_similarity,
                      dump_channels, free_space_loss, load_channels)
from .conic import (SdrInstance, SdrSolution, SdrSolverError, bisect_t,
                    coupling_matrix, physical_margins, rank_one_extract,
                    solve_feasibility)
from .harness import (CampaignResult, ReportRow, SchemeSpec, empirical_cdf,
                      estimate_position, group_rows, mean_metric, read_report,
                      run_campaign, run_trial, write_report)
from .positioning import (DegenerateGeometryError, EigenState, TdoaModel,
                          a_vector, build_tdoa_model, crlb, crlb_approx,
                          crlb_gradient, eigen_update, gdop, mu_metric,
                          sample_tdoa, toa_variance)
from .scenario import (EARTH_RADIUS_M, SPEED_OF_LIGHT_M_S, Geometry,
                       ScenarioConfig, generate_cells, generate_constellation,
                       generate_geometry)
from .scheduling import (CapacityError, SchedulePlan, check_constraints,
                         comm_schedule, dump_plan, gdop_schedule, hbs,
                         parallax_schedule)

__version__ = "0.1.0"

__all__ = [
    "CampaignResult", "CapacityError", "ChannelSet", "DegenerateGeometryError",
    "DstaResult", "EARTH_RADIUS_M", "EigenState", "Geometry",
    "PositioningState", "ReportRow", "ScenarioConfig", "SchedulePlan",
    "SchemeSpec", "SdrInstance", "SdrSolution", "SdrSolverError",
    "SPEED_OF_LIGHT_M_S", "TdoaModel", "a_vector", "bisect_t",
    "build_channel_set", "build_tdoa_model", "channel_similarity",
    "check_constraints", "comm_schedule", "compute_sinr", "coupling_matrix",
    "crlb", "crlb_approx", "crlb_gradient", "dsta", "dump_channels",
    "dump_plan", "eigen_update", "empirical_cdf", "estimate_position",
    "free_space_loss", "gdop", "gdop_schedule", "generate_cells",
    "generate_constellation", "generate_geometry", "group_rows", "hbs",
    "load_channels", "mean_metric", "mu_metric", "parallax_schedule",
    "physical_margins", "rank_one_extract", "read_report", "run_campaign",
    "run_trial", "sample_tdoa", "scb_beamformer", "scbwi_snr",
    "solve_feasibility", "toa_variance", "write_report", "zf_beamformer",
]
