"""Built-in demo agreement paths assembled from the stage archetypes."""
from .scarce import SCARCE_PATH_NAME, build_scarce_knowledge_path
from .tsc import TSC_PATH_NAME, build_tsc_path

#: Builders by path name, used by the CLI and replay to reconstruct engines.
DEMO_PATH_BUILDERS = {
    SCARCE_PATH_NAME: build_scarce_knowledge_path,
    TSC_PATH_NAME: build_tsc_path,
}

__all__ = [
    "SCARCE_PATH_NAME",
    "TSC_PATH_NAME",
    "DEMO_PATH_BUILDERS",
    "build_scarce_knowledge_path",
    "build_tsc_path",
]
