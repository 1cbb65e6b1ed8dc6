#include "modkit/grid.hpp"

#include <string>

namespace modkit {

CellIndex world_to_cell(const GridSpec& spec, double x, double y) {
  const int col = static_cast<int>(std::floor((x - spec.origin_x) / spec.cell_size));
  const int row = static_cast<int>(std::floor((y - spec.origin_y) / spec.cell_size));
  if (row < 0 || row >= spec.height || col < 0 || col >= spec.width) {
    throw OutOfBounds("coordinate (" + std::to_string(x) + ", " + std::to_string(y) +
                      ") outside grid");
  }
  return {row, col};
}

HistogramGrid::HistogramGrid(const GridSpec& spec, int bins) : spec_(spec), bins_(bins) {
  spec.validate();
  if (bins_ < 2) throw ConfigError("bins", "must be >= 2");
  counts_.assign(spec_.num_cells() * static_cast<std::size_t>(bins_), 0);
}

std::size_t HistogramGrid::accumulate(const Detection& d) {
  if (!spec_.contains(d.x, d.y)) return 1;
  const CellIndex c = world_to_cell(spec_, d.x, d.y);
  ++counts_[index(c.row, c.col, bin_of(d.alpha, bins_))];
  return 0;
}

std::size_t HistogramGrid::accumulate(std::span<const Detection> ds) {
  std::size_t skipped = 0;
  for (const Detection& d : ds) skipped += accumulate(d);
  return skipped;
}

std::uint64_t HistogramGrid::total() const {
  std::uint64_t n = 0;
  for (std::uint32_t c : counts_) n += c;
  return n;
}

HistogramGrid merge(const HistogramGrid& a, const HistogramGrid& b) {
  if (a.spec() != b.spec() || a.bins() != b.bins())
    throw SpecMismatch("merge: grids differ in spec or bin count");
  HistogramGrid out = a;
  for (int r = 0; r < a.spec().height; ++r)
    for (int c = 0; c < a.spec().width; ++c)
      for (int bi = 0; bi < a.bins(); ++bi) out.count(r, c, bi) += b.count(r, c, bi);
  return out;
}

}  // namespace modkit
