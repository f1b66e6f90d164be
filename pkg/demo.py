import argparse

import numpy as np

from bubble_correction.integrals import moment_integral
from bubble_correction.polynomial import alternating_powers, iterated_laplacian
from bubble_correction.profile import RefinedProfileSpec, linearized_residual, refined_profile
from bubble_correction.reduction import coefficient_table, solve_gamma


def show_table(n, ell):
    """
    Print the coefficient table used for the reduction in dimension n and degree ell.
    """
    table = coefficient_table(n, ell)
    print(f"Coefficient table (n={n}, ell={ell}, h={table.h}):")
    for j, k in table.build_order:
        print(f"- C[{j},{k}] = {table.coefficient(j, k)}")


def main(n, ell, lam, samples, seed):
    # Step 1: Build the source polynomial
    print("Building the alternating even-power source...")
    P = alternating_powers(n, ell)
    print(f"P = {P}")
    print(f"Top Laplacian: {iterated_laplacian(P, ell // 2)}")

    # Step 2: Coefficient table
    show_table(n, ell)

    # Step 3: Solve L(Gamma) = P exactly
    print("Solving for the correction polynomial...")
    solution = solve_gamma(P)
    print(f"Gamma = {solution.gamma}")
    print(f"Verified: {solution.verified}")

    # Step 4: Check the float shadow of the solution
    rng = np.random.default_rng(seed)
    report = linearized_residual(solution.gamma, P, samples=samples, rng=rng)
    print(f"Linearized residual over {report.samples} points: max {report.max_abs:.3e}")

    # Step 5: Bubble-weighted moment of P
    moment = moment_integral(P)
    print(f"Moment of P: {moment.j_multiple} x J (numeric {moment.numeric:.6g})")

    # Step 6: Evaluate the refined profile at its center
    if ell > n - 2:
        print("Degree exceeds n - 2; skipping the refined profile.")
        return
    spec = RefinedProfileSpec(
        n=n,
        ell=ell,
        lam=lam,
        xi=[0.0] * n,
        gamma=solution.gamma,
        joint_radius_c=1.0,
    )
    profile = refined_profile(spec)
    print(f"Profile at its center: {profile([0.0] * n):.6g} (peak {profile.bubble.peak:.6g})")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Bubble Correction Demo")
    parser.add_argument("--n", type=int, default=8, help="Dimension (even)")
    parser.add_argument("--ell", type=int, default=4, help="Even degree of the source")
    parser.add_argument("--lam", type=float, default=0.1, help="Concentration scale")
    parser.add_argument("--samples", type=int, default=1000, help="Residual sample points")
    parser.add_argument("--seed", type=int, default=20240611, help="Random seed")
    args = parser.parse_args()
    main(args.n, args.ell, args.lam, args.samples, args.seed)
