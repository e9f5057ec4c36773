"""Environment detection for appropriate progress display."""

import os
import sys
from enum import Enum


class EnvironmentType(Enum):
    """Types of execution environments."""

    INTERACTIVE = "interactive"
    CI_CD = "ci_cd"
    TEST = "test"


CI_INDICATORS = (
    "CI",
    "CONTINUOUS_INTEGRATION",
    "GITHUB_ACTIONS",
    "GITLAB_CI",
    "JENKINS_URL",
    "BUILDKITE",
)


def detect_environment() -> EnvironmentType:
    """Detect the current execution environment.

    Progress goes to stderr, so a redirected stdout still gets a live display.
    """
    if "pytest" in sys.modules:
        return EnvironmentType.TEST

    if any(os.getenv(indicator) for indicator in CI_INDICATORS):
        return EnvironmentType.CI_CD

    if not sys.stderr.isatty():
        return EnvironmentType.CI_CD

    return EnvironmentType.INTERACTIVE