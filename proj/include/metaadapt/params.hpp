#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace metaadapt {

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;

  bool operator==(const Segment&) const = default;
};

/// Named, contiguous, disjoint segments covering a flat parameter vector.
class Layout {
 public:
  Layout() = default;

  /// Appends a segment directly after the last one.
  void append(std::string name, std::size_t length);

  const Segment& segment(std::string_view name) const;
  const Segment* find(std::string_view name) const;
  const std::vector<Segment>& segments() const { return segments_; }
  std::size_t size() const { return size_; }

  /// Rebuilds a layout from explicit segments; throws StructuralError unless
  /// they are contiguous from offset 0 with unique names.
  static Layout from_segments(std::vector<Segment> segments);

  bool operator==(const Layout&) const = default;

 private:
  std::vector<Segment> segments_;
  std::size_t size_ = 0;
};

/// Flat view of every trainable value: model weights, biases, and the
/// learnable per-step inner learning rates.
struct ParameterVector {
  std::vector<double> values;
  Layout layout;

  std::size_t size() const { return values.size(); }
  std::span<double> segment(std::string_view name);
  std::span<const double> segment(std::string_view name) const;
};

/// Derivatives with the same layout as the ParameterVector they belong to.
struct GradientVector {
  std::vector<double> values;
  Layout layout;

  std::size_t size() const { return values.size(); }
  std::span<const double> segment(std::string_view name) const;
};

/// Throws NumericError naming the first non-finite coordinate.
void require_finite(std::span<const double> values, std::string_view what);

}  // namespace metaadapt
