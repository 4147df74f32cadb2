#pragma once

// Scalar type of the model math. The same sources are built as a 32-bit
// library and a 64-bit library; an inline namespace keeps the two sets of
// symbols apart so both can be linked into one binary.

#if defined(PMP_REAL_DOUBLE)
#define PMP_PRECISION_BEGIN inline namespace f64 {
#else
#define PMP_PRECISION_BEGIN inline namespace f32 {
#endif
#define PMP_PRECISION_END }

namespace pmp {
PMP_PRECISION_BEGIN

#if defined(PMP_REAL_DOUBLE)
using Real = double;
#else
using Real = float;
#endif

PMP_PRECISION_END
}  // namespace pmp
