#pragma once

// Clinical fragmentation grades and their mapping to continuous ratio
// intervals. Boundaries are lower-inclusive: ratio 0.10 is grade B.

#include "attnreg/util/image.hpp"

#include <array>
#include <stdexcept>
#include <string>

namespace attnreg::grading {

enum class Grade : int { A = 0, B = 1, C = 2, D = 3 };

struct GradeInterval {
  double y_min;
  double y_max;
};

constexpr std::array<Grade, 4> kAllGrades = {Grade::A, Grade::B, Grade::C, Grade::D};

// The four intervals tile [0,1]: A [0,0.10), B [0.10,0.25), C [0.25,0.50),
// D [0.50,1.0]. grade_to_interval returns the closed hull used by the range
// penalty; membership for classification uses the lower-inclusive rule.
inline GradeInterval grade_to_interval(Grade g) {
  switch (g) {
    case Grade::A: return {0.0, 0.10};
    case Grade::B: return {0.10, 0.25};
    case Grade::C: return {0.25, 0.50};
    case Grade::D: return {0.50, 1.0};
  }
  throw std::invalid_argument("grade_to_interval: bad grade");
}

inline Grade ratio_to_grade(double r) {
  if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("ratio_to_grade: ratio outside [0,1]");
  if (r < 0.10) return Grade::A;
  if (r < 0.25) return Grade::B;
  if (r < 0.50) return Grade::C;
  return Grade::D;
}

inline char grade_letter(Grade g) { return char('A' + int(g)); }

inline Grade grade_from_letter(char c) {
  if (c < 'A' || c > 'D') throw std::invalid_argument(std::string("bad grade letter: ") + c);
  return Grade(c - 'A');
}

// Fragment area as a fraction of embryo area, counted over fragment ∧ embryo.
inline double mask_to_ratio(const util::Mask& fragment, const util::Mask& embryo) {
  if (fragment.h != embryo.h || fragment.w != embryo.w)
    throw std::invalid_argument("mask_to_ratio: shape mismatch");
  const std::int64_t denom = embryo.count();
  if (denom == 0) throw std::invalid_argument("mask_to_ratio: empty embryo mask");
  return double(util::intersection_count(fragment, embryo)) / double(denom);
}

}  // namespace attnreg::grading
