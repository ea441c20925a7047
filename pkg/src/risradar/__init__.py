"""RIS-aided bistatic terahertz MIMO radar simulator.

Localizes blocked targets by steering a hierarchical RIS codebook into the
shadowed region, estimating arrival angles at a wideband receiver, and
intersecting the two rays; includes knife-edge diffraction modeling with
background subtraction, iterative ML refinement, and Cramer-Rao position
error bounds.
"""

from .bounds import BoundsReport, fim_channel, jacobian, mu_derivatives, peb, peb_for_scenario
from .channel import (
    AbsorptionModel,
    FrequencyGrid,
    PathGain,
    atm_loss,
    build_ris_target_rx_channel,
    build_tx_ris_channel,
    channel_gain,
    fspl,
    rerad_coefficient,
)
from .codebook import Codebook, Codeword, DesignOptions, design_codebook, design_codeword, ideal_pattern, ris_beampattern
from .diffraction import (
    DiffractionGeometry,
    diff_path1_channel,
    diff_path2_channel,
    diffraction_geometry,
    fresnel_cs,
    fresnel_param,
    knife_edge_loss,
)
from .doa import (
    Detection,
    SpatialSpectrum,
    coherent_covariance,
    detect_peaks,
    focusing_matrix,
    spectrum_conventional,
    spectrum_music,
)
from .geometry import (
    ArrayConfig,
    DegenerateGeometryError,
    ParallelRaysError,
    angles_from_positions,
    aoa_resolution_bound,
    aod_resolution_bound,
    deterministic_error_floor,
    intersect_rays,
    statistical_error_floor,
    steering_vector,
)
from .refine import RefinedEstimate, model_mean, refine
from .scan import ScanResult, TargetEstimate, run_full_scan, run_scan
from .scenario import Scenario, ScenarioError, load_scenario, scenario_from_dict
from .synthesis import (
    background_subtract,
    draw_rcs,
    retro_steer_phases,
    steer_phases,
    synthesize_calibration,
    synthesize_transmission,
    transmit_vector,
)
from .experiment import (
    ExperimentResult,
    emit_results,
    experiment_presets,
    run_experiment,
    run_preset,
    run_trial,
)

__version__ = "0.1.0"
