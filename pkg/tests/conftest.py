import os
import tempfile

from hypothesis import settings

settings.register_profile("besselhit", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("besselhit")

# keep the zero cache out of the user's home during tests
os.environ.setdefault("BESSELHIT_CACHE_DIR", tempfile.mkdtemp(prefix="besselhit-cache-"))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
