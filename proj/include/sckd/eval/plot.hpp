#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sckd/losses/losses.hpp"
#include "sckd/tensor.hpp"

namespace sckd::plot {

struct Color {
  std::uint8_t r = 0, g = 0, b = 0;
};

enum class Anchor { Start, Middle, End };

/// Vector figure: primitives are kept so the same figure renders to SVG and to a
/// raster PNG (built-in 5x8 bitmap font for text).
class Figure {
 public:
  Figure(int width, int height);

  void rect(double x, double y, double w, double h, Color fill);
  void outline(double x, double y, double w, double h, Color stroke, double width = 1.0);
  void polyline(std::vector<std::pair<double, double>> pts, Color stroke, double width = 1.5);
  void marker(double x, double y, double radius, Color fill);
  /// size is the glyph height in pixels, rounded to a multiple of 8 for raster output.
  void text(double x, double y, std::string s, int size = 8, Anchor anchor = Anchor::Start, Color color = {});

  int width() const { return w_; }
  int height() const { return h_; }
  int polyline_count() const;

  std::string svg() const;
  /// Row-major RGB8, width * height * 3 bytes.
  std::vector<std::uint8_t> raster() const;
  /// Writes <stem>.svg and <stem>.png, returns both paths.
  std::vector<std::filesystem::path> save(const std::filesystem::path& stem) const;

 private:
  struct Prim {
    enum Kind { Rect, Outline, Line, Marker, Text } kind;
    std::vector<std::pair<double, double>> pts;
    double a = 0, b = 0, c = 0, d = 0;
    Color color;
    std::string s;
    int size = 8;
    Anchor anchor = Anchor::Start;
  };
  int w_, h_;
  std::vector<Prim> prims_;
};

void write_png(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgb);

/// Sequential colormap over [0, 1].
Color colormap(double v);

struct PlotSummary {
  std::vector<std::filesystem::path> files;
  int panels = 0;
  int curves = 0;
  int heatmaps = 0;
  int points = 0;
};

/// Ground truth vs prediction for one window (2 x t each), one panel per foot.
PlotSummary plot_estimation(const Tensor& prediction, const Tensor& truth, const std::string& title,
                            const std::filesystem::path& stem);

struct CorrmapPanel {
  std::string model;
  TensorD M;               // b x b similarity map
  std::vector<TensorD> G;  // one b x b correlation map per selected channel
  std::vector<int> channels;
};

/// M and the per-channel G maps of one tap (b x c x t[...]) for the first b samples.
/// t_target != 0 resizes the pooled feature to that length first (teacher alignment).
CorrmapPanel corrmap_panel(const std::string& model, const TensorD& tap, const losses::SckdParams& params,
                           int t_target = 0);

/// One row per model: M followed by its G maps. Colour scales are shared per map kind.
PlotSummary plot_corrmap(const std::vector<CorrmapPanel>& rows, const std::string& title,
                         const std::filesystem::path& stem);

/// Metric against a swept hyperparameter; err may be empty.
PlotSummary plot_sensitivity(const std::vector<double>& x, const std::vector<double>& y,
                             const std::vector<double>& err, const std::string& xlabel, const std::string& ylabel,
                             const std::string& title, const std::filesystem::path& stem);

}  // namespace sckd::plot
