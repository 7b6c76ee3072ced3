from .config import (Intervention, SimConfig, apply_intervention, bundled_config, dump_config, load_config,
                     load_config_text, read_interventions)
from .ensemble import EnsembleSummary, relative_effect, run_ensemble
from .model import (RemovalRecord, SequencingError, Trajectory, VenueState, WorldState, convert_demand, init_world,
                    moderate, remove_venue_wave, run, step)
