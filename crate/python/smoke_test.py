"""Smoke test for the exbic extension module.

Build and install first:
    pip install --no-build-isolation -e crates/python
"""

import json

import exbic


def main():
    coherent = [
        [1.0, 3.0, 5.0, 7.0, 9.0],
        [1.5, 3.5, 5.5, 7.5, 9.5],
        [3.5, 5.5, 7.5, 9.5, 11.5],
        [4.5, 6.5, 8.5, 10.5, 12.5],
        [2.0, 4.0, 6.0, 8.0, 10.0],
    ]
    assert exbic.matrix_msr(coherent) == 0.0
    assert exbic.mean_squared_residue([[0.0, 0.0], [0.0, 2.0]], [0, 1], [0, 1]) == 0.25

    winners, revenue = exbic.solve_wdp([(5.0, [0, 1]), (3.0, [0]), (3.0, [1]), (4.0, [2])])
    assert (winners, revenue) == ([1, 2, 3], 10.0)

    a, truth = exbic.generate_synthetic(preset="ten_blocks", seed=1)
    assert len(a) == 100 and len(a[0]) == 50
    delta = exbic.matrix_msr(a) / 20
    res = exbic.run_exclusive_biclustering(a, delta, k=20, restarts=5, seed=1)
    rows = [r for b in res.chosen for r in b.rows]
    assert len(rows) == len(set(rows)), "chosen biclusters share rows"
    assert res.total_volume == sum(b.volume for b in res.chosen)
    report = json.loads(exbic.evaluate(res.chosen, truth))
    print(f"recovered {sum(report['per_block_recovered'])}/10 blocks, volume {res.total_volume}")

    scan = exbic.gap_scan(a, [delta, 2 * delta], 2, k=10, restarts=2, delta_ladder=[1.0])
    assert len(scan.gap) == 2 and scan.selected_delta in scan.grid

    try:
        exbic.matrix_msr([[1.0, 2.0], [3.0]])
    except ValueError:
        pass
    else:
        raise AssertionError("ragged matrix accepted")
    print("python smoke test passed")


if __name__ == "__main__":
    main()
