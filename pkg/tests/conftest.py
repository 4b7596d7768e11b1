import numpy as np
import pytest

from densestyle import save_tensor


@pytest.fixture
def run_cli(capsys):
    """Invoke the CLI in-process and return its exit code."""
    from densestyle.cli import main

    def run(*argv):
        try:
            return main([str(a) for a in argv])
        except SystemExit as exc:
            return exc.code

    return run


@pytest.fixture
def write_tensor(tmp_path):
    def write(name, array):
        path = tmp_path / name
        save_tensor(np.asarray(array), path)
        return path

    return write
