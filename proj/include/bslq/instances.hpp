#pragma once

#include "bslq/core_types.hpp"

namespace bslq {

/// Problem with constant coefficients on [0, T]. Empty matrices mean zero.
struct ConstantCoefficients {
  MatrixXd A, B, C, G, Q, S1, S2, R11, R12, R22;
};
ProblemData constant_problem(int n, int m, double T, int n_steps,
                             const ConstantCoefficients& c,
                             Interpolation interp = Interpolation::kLinear);

/// The scalar maximin family: A=1, B=-1, C=-(a^2+1)/a^2, Q=1,
/// R11=-1/a^2, R22=a^2, G=S=R12=0 on [0, 1]. a=1 is not uniformly convex.
ProblemData maximin_instance(double a, int n_steps);

/// A=0, B=1, C=0, S=0, R11=0, R22=1: Sigma(t)=T-t, P_lambda=1/(1/lambda+T-t).
ProblemData scalar_instance(int n_steps, double T = 1.0);

/// Every coefficient zero except R22 = r22 * I.
ProblemData zero_instance(int n, int m, int n_steps, double r22 = 1.0);

/// Scalar instance with nonzero G, Q, S1, S2, R12 and positive cost block.
ProblemData general_instance(int n_steps);

/// n=2, m=1, time-varying coefficients, indefinite R11 and Q.
ProblemData indefinite_2d_instance(int n_steps);

/// R22 = -I, B = 0, all other weights zero: uniform convexity fails.
ProblemData necessity_instance(int n_steps);

}  // namespace bslq
