#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace hclrec {

struct Series {
  std::string name;
  std::vector<double> values;
};

/// Static line chart; x positions are evenly spaced categorical labels.
void write_line_plot_svg(const std::filesystem::path& path, const std::string& title,
                         const std::string& x_label, const std::vector<std::string>& x_ticks,
                         const std::vector<Series>& series);

}  // namespace hclrec
