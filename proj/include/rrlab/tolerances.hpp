#pragma once

// Numeric tolerances shared by library checks and the test suites.
namespace rrlab::tol {

inline constexpr double kSoftmaxSum = 1e-12;
inline constexpr double kRecompute = 1e-12;
inline constexpr double kFiniteDiffStep = 1e-5;
inline constexpr double kFiniteDiffRel = 1e-4;
// Relative error is measured against max(|a|, |b|, kFiniteDiffFloor) so that
// gradients that are zero up to round-off do not blow the ratio up.
inline constexpr double kFiniteDiffFloor = 1e-6;
inline constexpr double kZeroGradNorm = 1e-10;
inline constexpr double kQValue = 1e-12;
inline constexpr double kNormalization = 1e-12;
inline constexpr double kSigmaGradRel = 0.05;
inline constexpr double kStandardErrors = 3.0;
inline constexpr double kConstantDegradation = 0.01;
inline constexpr double kOrderStatMean = 0.02;
inline constexpr double kOrderStatVar = 0.01;
inline constexpr double kDriftZero = 1e-8;
inline constexpr double kLemmaKl = 1e-6;

}  // namespace rrlab::tol
