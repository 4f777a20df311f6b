from cmclab.commands import (
    AACompareCommand,
    FlatnessCommand,
    JacobiCommand,
    MonodromyCommand,
    SurfaceCommand,
)
from cmclab.utils.run_config import RunConfig, load_run_config
