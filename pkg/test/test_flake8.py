from pathlib import Path

import pytest
from flake8.api import legacy as flake8

ROOT = Path(__file__).resolve().parents[1]


@pytest.mark.flake8
@pytest.mark.linter
def test_flake8():
    style = flake8.get_style_guide(max_line_length=120, exclude=['examples', 'build'])
    report = style.check_files([str(ROOT / 'waveop'), str(ROOT / 'test')])
    assert report.total_errors == 0, \
        'Found %d code style errors / warnings' % report.total_errors
