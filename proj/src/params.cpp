#include "metaadapt/params.hpp"

#include <cmath>
#include <set>

#include "metaadapt/errors.hpp"

namespace metaadapt {

void Layout::append(std::string name, std::size_t length) {
  if (find(name) != nullptr) {
    throw StructuralError("duplicate layout segment '" + name + "'");
  }
  segments_.push_back(Segment{std::move(name), size_, length});
  size_ += length;
}

const Segment* Layout::find(std::string_view name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

const Segment& Layout::segment(std::string_view name) const {
  const Segment* s = find(name);
  if (s == nullptr) {
    throw StructuralError("unknown layout segment '" + std::string(name) + "'");
  }
  return *s;
}

Layout Layout::from_segments(std::vector<Segment> segments) {
  Layout out;
  for (auto& s : segments) {
    if (s.offset != out.size_) {
      throw StructuralError("segment '" + s.name + "' is not contiguous");
    }
    out.append(std::move(s.name), s.length);
  }
  return out;
}

std::span<double> ParameterVector::segment(std::string_view name) {
  const Segment& s = layout.segment(name);
  return std::span<double>(values).subspan(s.offset, s.length);
}

std::span<const double> ParameterVector::segment(std::string_view name) const {
  const Segment& s = layout.segment(name);
  return std::span<const double>(values).subspan(s.offset, s.length);
}

std::span<const double> GradientVector::segment(std::string_view name) const {
  const Segment& s = layout.segment(name);
  return std::span<const double>(values).subspan(s.offset, s.length);
}

void require_finite(std::span<const double> values, std::string_view what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(what) + ": non-finite value at coordinate " +
                         std::to_string(i));
    }
  }
}

}  // namespace metaadapt
