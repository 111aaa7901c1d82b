import numpy as np
import pytest
from spatial_attention_pyramid.exceptions import DataFormatError
from spatial_attention_pyramid.utils import read_netpbm, write_pgm, write_ppm


def test_netpbm_files(tmp_path):
    rng = np.random.default_rng(0)
    image = rng.integers(0, 256, size=(5, 7, 3)).astype(np.uint8)
    label = rng.integers(0, 4, size=(5, 7)).astype(np.uint8)
    write_ppm(str(tmp_path / "image.ppm"), image)
    write_pgm(str(tmp_path / "label.pgm"), label)
    assert np.array_equal(read_netpbm(str(tmp_path / "image.ppm")), image)
    assert np.array_equal(read_netpbm(str(tmp_path / "label.pgm")), label)


def test_netpbm_comments(tmp_path):
    path = tmp_path / "comment.pgm"
    path.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x03\x07")
    assert read_netpbm(str(path)).tolist() == [[3, 7]]


def test_malformed_header_names_the_file(tmp_path):
    path = tmp_path / "broken.ppm"
    path.write_bytes(b"P3\n2 2\n255\n")
    with pytest.raises(DataFormatError, match="broken.ppm"):
        read_netpbm(str(path))
    path.write_bytes(b"P6\n2 2\n255\n\x00")
    with pytest.raises(DataFormatError, match="broken.ppm"):
        read_netpbm(str(path))


@pytest.mark.parametrize("content", [b"P6\n2 2\n255", b"P5 1 1 255", b"P5 1 1 255 ", b"P5 1 1 255\n\x01\x02"])
def test_header_without_matching_raster(tmp_path, content):
    path = tmp_path / "short.pgm"
    path.write_bytes(content)
    with pytest.raises(DataFormatError, match="short.pgm"):
        read_netpbm(str(path))
