import math
import re
import xml.etree.ElementTree as ET

from rltsp.svg import tour_svg, write_tour_svg
from rltsp.tsp_core import TspInstance, nearest_neighbor, random_instance, tour_length

NS = "{http://www.w3.org/2000/svg}"
SQUARE = TspInstance([[0, 0], [1, 0], [1, 1], [0, 1]])


def test_square_structure():
    root = ET.fromstring(tour_svg(SQUARE, [0, 1, 2, 3]))
    assert len(root.findall(f"{NS}circle")) == 4
    d = root.find(f"{NS}path").get("d")
    assert d.startswith("M") and d.endswith("Z")
    assert d.count("L") == 3  # plus the closing Z makes 4 segments


def test_viewport_margin():
    root = ET.fromstring(tour_svg(SQUARE, [0, 1, 2, 3]))
    xs = [float(c.get("cx")) for c in root.findall(f"{NS}circle")]
    size = float(root.get("width"))
    # unit square spans 1/1.1 of the drawing, centered
    assert min(xs) == round(size * 0.05 / 1.1, 3)
    assert max(xs) == round(size * 1.05 / 1.1, 3)


def test_annotated_length():
    inst = random_instance(12, 3)
    tour = nearest_neighbor(inst, 0)
    text = ET.fromstring(tour_svg(inst, tour)).find(f"{NS}text").text
    shown = float(re.search(r"length ([0-9.]+)", text).group(1))
    assert math.isclose(shown, tour_length(inst, tour), abs_tol=5e-5)


def test_byte_identical(tmp_path):
    inst = random_instance(15, 0)
    tour = nearest_neighbor(inst, 0)
    write_tour_svg(tmp_path / "a.svg", inst, tour)
    write_tour_svg(tmp_path / "b.svg", inst, tour)
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
