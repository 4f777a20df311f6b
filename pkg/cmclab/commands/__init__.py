from cmclab.commands.commands import (
    COMMANDS,
    AACompareCommand,
    FlatnessCommand,
    JacobiCommand,
    MonodromyCommand,
    SurfaceCommand,
)
from cmclab.commands.lab_command import LabCommand
