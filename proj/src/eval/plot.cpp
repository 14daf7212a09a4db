#include "sckd/eval/plot.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sckd::plot {

namespace fs = std::filesystem;

namespace {

// Columns of 8 rows each, bit 0 at the top. ASCII 0x20..0x7e.
constexpr std::array<std::array<std::uint8_t, 5>, 95> kFont{{
    {0x00, 0x00, 0x00, 0x00, 0x00}, {0x00, 0x00, 0x5F, 0x00, 0x00}, {0x00, 0x07, 0x00, 0x07, 0x00},
    {0x14, 0x7F, 0x14, 0x7F, 0x14}, {0x24, 0x2A, 0x7F, 0x2A, 0x12}, {0x23, 0x13, 0x08, 0x64, 0x62},
    {0x36, 0x49, 0x56, 0x20, 0x50}, {0x00, 0x08, 0x07, 0x03, 0x00}, {0x00, 0x1C, 0x22, 0x41, 0x00},
    {0x00, 0x41, 0x22, 0x1C, 0x00}, {0x2A, 0x1C, 0x7F, 0x1C, 0x2A}, {0x08, 0x08, 0x3E, 0x08, 0x08},
    {0x00, 0x80, 0x70, 0x30, 0x00}, {0x08, 0x08, 0x08, 0x08, 0x08}, {0x00, 0x00, 0x60, 0x60, 0x00},
    {0x20, 0x10, 0x08, 0x04, 0x02}, {0x3E, 0x51, 0x49, 0x45, 0x3E}, {0x00, 0x42, 0x7F, 0x40, 0x00},
    {0x72, 0x49, 0x49, 0x49, 0x46}, {0x21, 0x41, 0x49, 0x4D, 0x33}, {0x18, 0x14, 0x12, 0x7F, 0x10},
    {0x27, 0x45, 0x45, 0x45, 0x39}, {0x3C, 0x4A, 0x49, 0x49, 0x31}, {0x41, 0x21, 0x11, 0x09, 0x07},
    {0x36, 0x49, 0x49, 0x49, 0x36}, {0x46, 0x49, 0x49, 0x29, 0x1E}, {0x00, 0x00, 0x14, 0x00, 0x00},
    {0x00, 0x40, 0x34, 0x00, 0x00}, {0x00, 0x08, 0x14, 0x22, 0x41}, {0x14, 0x14, 0x14, 0x14, 0x14},
    {0x00, 0x41, 0x22, 0x14, 0x08}, {0x02, 0x01, 0x59, 0x09, 0x06}, {0x3E, 0x41, 0x5D, 0x59, 0x4E},
    {0x7C, 0x12, 0x11, 0x12, 0x7C}, {0x7F, 0x49, 0x49, 0x49, 0x36}, {0x3E, 0x41, 0x41, 0x41, 0x22},
    {0x7F, 0x41, 0x41, 0x41, 0x3E}, {0x7F, 0x49, 0x49, 0x49, 0x41}, {0x7F, 0x09, 0x09, 0x09, 0x01},
    {0x3E, 0x41, 0x41, 0x51, 0x73}, {0x7F, 0x08, 0x08, 0x08, 0x7F}, {0x00, 0x41, 0x7F, 0x41, 0x00},
    {0x20, 0x40, 0x41, 0x3F, 0x01}, {0x7F, 0x08, 0x14, 0x22, 0x41}, {0x7F, 0x40, 0x40, 0x40, 0x40},
    {0x7F, 0x02, 0x1C, 0x02, 0x7F}, {0x7F, 0x04, 0x08, 0x10, 0x7F}, {0x3E, 0x41, 0x41, 0x41, 0x3E},
    {0x7F, 0x09, 0x09, 0x09, 0x06}, {0x3E, 0x41, 0x51, 0x21, 0x5E}, {0x7F, 0x09, 0x19, 0x29, 0x46},
    {0x26, 0x49, 0x49, 0x49, 0x32}, {0x03, 0x01, 0x7F, 0x01, 0x03}, {0x3F, 0x40, 0x40, 0x40, 0x3F},
    {0x1F, 0x20, 0x40, 0x20, 0x1F}, {0x3F, 0x40, 0x38, 0x40, 0x3F}, {0x63, 0x14, 0x08, 0x14, 0x63},
    {0x03, 0x04, 0x78, 0x04, 0x03}, {0x61, 0x59, 0x49, 0x4D, 0x43}, {0x00, 0x7F, 0x41, 0x41, 0x41},
    {0x02, 0x04, 0x08, 0x10, 0x20}, {0x00, 0x41, 0x41, 0x41, 0x7F}, {0x04, 0x02, 0x01, 0x02, 0x04},
    {0x40, 0x40, 0x40, 0x40, 0x40}, {0x00, 0x03, 0x07, 0x08, 0x00}, {0x20, 0x54, 0x54, 0x78, 0x40},
    {0x7F, 0x28, 0x44, 0x44, 0x38}, {0x38, 0x44, 0x44, 0x44, 0x28}, {0x38, 0x44, 0x44, 0x28, 0x7F},
    {0x38, 0x54, 0x54, 0x54, 0x18}, {0x00, 0x08, 0x7E, 0x09, 0x02}, {0x18, 0xA4, 0xA4, 0x9C, 0x78},
    {0x7F, 0x08, 0x04, 0x04, 0x78}, {0x00, 0x44, 0x7D, 0x40, 0x00}, {0x20, 0x40, 0x40, 0x3D, 0x00},
    {0x7F, 0x10, 0x28, 0x44, 0x00}, {0x00, 0x41, 0x7F, 0x40, 0x00}, {0x7C, 0x04, 0x78, 0x04, 0x78},
    {0x7C, 0x08, 0x04, 0x04, 0x78}, {0x38, 0x44, 0x44, 0x44, 0x38}, {0xFC, 0x18, 0x24, 0x24, 0x18},
    {0x18, 0x24, 0x24, 0x18, 0xFC}, {0x7C, 0x08, 0x04, 0x04, 0x08}, {0x48, 0x54, 0x54, 0x54, 0x24},
    {0x04, 0x04, 0x3F, 0x44, 0x24}, {0x3C, 0x40, 0x40, 0x20, 0x7C}, {0x1C, 0x20, 0x40, 0x20, 0x1C},
    {0x3C, 0x40, 0x30, 0x40, 0x3C}, {0x44, 0x28, 0x10, 0x28, 0x44}, {0x4C, 0x90, 0x90, 0x90, 0x7C},
    {0x44, 0x64, 0x54, 0x4C, 0x44}, {0x00, 0x08, 0x36, 0x41, 0x00}, {0x00, 0x00, 0x77, 0x00, 0x00},
    {0x00, 0x41, 0x36, 0x08, 0x00}, {0x02, 0x01, 0x02, 0x04, 0x02},
}};

const Color kBlack{0, 0, 0};
const Color kGrey{150, 150, 150};
const Color kLight{225, 225, 225};
const Color kTruth{20, 20, 20};
const Color kPred{214, 39, 40};
const Color kCurve{31, 119, 180};

int glyph_scale(int size) { return std::max(1, static_cast<int>(std::lround(size / 8.0))); }
double text_width(const std::string& s, int size) {
  return s.empty() ? 0.0 : static_cast<double>(s.size()) * 6.0 * glyph_scale(size) - glyph_scale(size);
}

std::string hex(Color c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string o;
  for (char ch : s) {
    if (ch == '&') o += "&amp;";
    else if (ch == '<') o += "&lt;";
    else if (ch == '>') o += "&gt;";
    else o += ch;
  }
  return o;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

struct Canvas {
  int w, h;
  std::vector<std::uint8_t> px;
  Canvas(int w_, int h_) : w(w_), h(h_), px(static_cast<std::size_t>(w_) * h_ * 3, 255) {}
  void set(int x, int y, Color c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    auto* p = &px[(static_cast<std::size_t>(y) * w + x) * 3];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
  void fill(double x, double y, double rw, double rh, Color c) {
    const int x0 = static_cast<int>(std::lround(x)), y0 = static_cast<int>(std::lround(y));
    const int x1 = static_cast<int>(std::lround(x + rw)), y1 = static_cast<int>(std::lround(y + rh));
    for (int j = std::max(y0, 0); j < std::min(y1, h); ++j)
      for (int i = std::max(x0, 0); i < std::min(x1, w); ++i) set(i, j, c);
  }
  void disc(double cx, double cy, double r, Color c) {
    const int x0 = static_cast<int>(std::floor(cx - r)), x1 = static_cast<int>(std::ceil(cx + r));
    const int y0 = static_cast<int>(std::floor(cy - r)), y1 = static_cast<int>(std::ceil(cy + r));
    for (int j = y0; j <= y1; ++j)
      for (int i = x0; i <= x1; ++i) {
        const double dx = i + 0.5 - cx, dy = j + 0.5 - cy;
        if (dx * dx + dy * dy <= r * r + 0.25) set(i, j, c);
      }
  }
  void line(double xa, double ya, double xb, double yb, double width, Color c) {
    const double len = std::hypot(xb - xa, yb - ya);
    const int steps = std::max(1, static_cast<int>(std::ceil(len * 3)));
    const double r = std::max(0.5, width / 2.0);
    for (int s = 0; s <= steps; ++s) {
      const double u = static_cast<double>(s) / steps;
      disc(xa + u * (xb - xa), ya + u * (yb - ya), r, c);
    }
  }
  void glyphs(double x, double y, const std::string& s, int size, Color c) {
    const int k = glyph_scale(size);
    int ox = static_cast<int>(std::lround(x));
    const int oy = static_cast<int>(std::lround(y));
    for (unsigned char ch : s) {
      const auto& g = kFont[(ch >= 0x20 && ch <= 0x7e) ? ch - 0x20 : '?' - 0x20];
      for (int col = 0; col < 5; ++col)
        for (int row = 0; row < 8; ++row)
          if (g[col] >> row & 1)
            for (int a = 0; a < k; ++a)
              for (int b2 = 0; b2 < k; ++b2) set(ox + col * k + a, oy + row * k + b2, c);
      ox += 6 * k;
    }
  }
};

struct Axes {
  double x, y, w, h;
  double xmin, xmax, ymin, ymax;
  double px(double v) const { return x + (v - xmin) / (xmax - xmin) * w; }
  double py(double v) const { return y + h - (v - ymin) / (ymax - ymin) * h; }
};

std::vector<double> nice_ticks(double lo, double hi, int target = 5) {
  const double range = hi - lo;
  if (!(range > 0)) return {lo};
  const double raw = range / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double f : {1.0, 2.0, 5.0, 10.0}) {
    step = f * mag;
    if (step >= raw) break;
  }
  std::vector<double> t;
  for (double v = std::ceil(lo / step - 1e-9) * step; v <= hi + step * 1e-9; v += step) t.push_back(v);
  return t;
}

void draw_axes(Figure& f, const Axes& a, const std::string& xlabel, const std::string& ylabel) {
  for (double v : nice_ticks(a.ymin, a.ymax)) {
    f.polyline({{a.x, a.py(v)}, {a.x + a.w, a.py(v)}}, kLight, 1.0);
    f.text(a.x - 6, a.py(v) - 4, tick_label(v), 8, Anchor::End, kBlack);
  }
  for (double v : nice_ticks(a.xmin, a.xmax)) {
    f.polyline({{a.px(v), a.y + a.h}, {a.px(v), a.y + a.h + 4}}, kBlack, 1.0);
    f.text(a.px(v), a.y + a.h + 7, tick_label(v), 8, Anchor::Middle, kBlack);
  }
  f.outline(a.x, a.y, a.w, a.h, kBlack, 1.0);
  f.text(a.x + a.w / 2, a.y + a.h + 20, xlabel, 8, Anchor::Middle, kBlack);
  f.text(a.x, a.y - 14, ylabel, 8, Anchor::Start, kBlack);
}

std::pair<double, double> value_range(const std::vector<const TensorD*>& maps) {
  double lo = 1e300, hi = -1e300;
  for (const auto* m : maps)
    for (double v : m->values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (lo > hi) return {0.0, 1.0};
  if (hi - lo < 1e-12) return {lo - 0.5, hi + 0.5};
  return {lo, hi};
}

void heatmap(Figure& f, double x, double y, double size, const TensorD& m, double lo, double hi) {
  const int b = m.dim(0);
  const double cell = size / b;
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) {
      const double v = (m[static_cast<std::size_t>(i) * b + j] - lo) / (hi - lo);
      f.rect(x + j * cell, y + i * cell, cell, cell, colormap(v));
    }
  f.outline(x, y, size, size, kGrey, 1.0);
}

void colorbar(Figure& f, double x, double y, double w, const std::string& label, double lo, double hi) {
  const int n = 64;
  for (int i = 0; i < n; ++i) f.rect(x + w * i / n, y, w / n + 0.5, 10, colormap((i + 0.5) / n));
  f.outline(x, y, w, 10, kGrey, 1.0);
  f.text(x, y + 14, tick_label(std::round(lo * 1000) / 1000), 8, Anchor::Start, kBlack);
  f.text(x + w, y + 14, tick_label(std::round(hi * 1000) / 1000), 8, Anchor::End, kBlack);
  f.text(x + w / 2, y - 12, label, 8, Anchor::Middle, kBlack);
}

}  // namespace

Figure::Figure(int width, int height) : w_(width), h_(height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("Figure: non-positive size");
}

void Figure::rect(double x, double y, double w, double h, Color fill) {
  prims_.push_back({Prim::Rect, {}, x, y, w, h, fill, {}, 8, Anchor::Start});
}
void Figure::outline(double x, double y, double w, double h, Color stroke, double width) {
  Prim p{Prim::Outline, {}, x, y, w, h, stroke, {}, 8, Anchor::Start};
  p.size = static_cast<int>(std::lround(width * 8));
  prims_.push_back(std::move(p));
}
void Figure::polyline(std::vector<std::pair<double, double>> pts, Color stroke, double width) {
  prims_.push_back({Prim::Line, std::move(pts), width, 0, 0, 0, stroke, {}, 8, Anchor::Start});
}
void Figure::marker(double x, double y, double radius, Color fill) {
  prims_.push_back({Prim::Marker, {}, x, y, radius, 0, fill, {}, 8, Anchor::Start});
}
void Figure::text(double x, double y, std::string s, int size, Anchor anchor, Color color) {
  prims_.push_back({Prim::Text, {}, x, y, 0, 0, color, std::move(s), size, anchor});
}

int Figure::polyline_count() const {
  return static_cast<int>(std::count_if(prims_.begin(), prims_.end(), [](const Prim& p) { return p.kind == Prim::Line; }));
}

std::string Figure::svg() const {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_ << "\" viewBox=\"0 0 " << w_
     << ' ' << h_ << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  for (const auto& p : prims_) {
    switch (p.kind) {
      case Prim::Rect:
        os << "<rect x=\"" << num(p.a) << "\" y=\"" << num(p.b) << "\" width=\"" << num(p.c) << "\" height=\"" << num(p.d)
           << "\" fill=\"" << hex(p.color) << "\"/>\n";
        break;
      case Prim::Outline:
        os << "<rect x=\"" << num(p.a) << "\" y=\"" << num(p.b) << "\" width=\"" << num(p.c) << "\" height=\"" << num(p.d)
           << "\" fill=\"none\" stroke=\"" << hex(p.color) << "\" stroke-width=\"" << num(p.size / 8.0) << "\"/>\n";
        break;
      case Prim::Line: {
        os << "<polyline fill=\"none\" stroke=\"" << hex(p.color) << "\" stroke-width=\"" << num(p.a) << "\" points=\"";
        for (std::size_t i = 0; i < p.pts.size(); ++i) os << (i ? " " : "") << num(p.pts[i].first) << ',' << num(p.pts[i].second);
        os << "\"/>\n";
        break;
      }
      case Prim::Marker:
        os << "<circle cx=\"" << num(p.a) << "\" cy=\"" << num(p.b) << "\" r=\"" << num(p.c) << "\" fill=\"" << hex(p.color)
           << "\"/>\n";
        break;
      case Prim::Text: {
        const char* anchor = p.anchor == Anchor::Start ? "start" : p.anchor == Anchor::Middle ? "middle" : "end";
        os << "<text x=\"" << num(p.a) << "\" y=\"" << num(p.b + p.size * 0.85) << "\" font-family=\"monospace\" font-size=\""
           << p.size * 1.2 << "\" text-anchor=\"" << anchor << "\" fill=\"" << hex(p.color) << "\">" << escape(p.s)
           << "</text>\n";
        break;
      }
    }
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<std::uint8_t> Figure::raster() const {
  Canvas cv(w_, h_);
  for (const auto& p : prims_) {
    switch (p.kind) {
      case Prim::Rect:
        cv.fill(p.a, p.b, p.c, p.d, p.color);
        break;
      case Prim::Outline: {
        const double lw = p.size / 8.0;
        cv.line(p.a, p.b, p.a + p.c, p.b, lw, p.color);
        cv.line(p.a + p.c, p.b, p.a + p.c, p.b + p.d, lw, p.color);
        cv.line(p.a + p.c, p.b + p.d, p.a, p.b + p.d, lw, p.color);
        cv.line(p.a, p.b + p.d, p.a, p.b, lw, p.color);
        break;
      }
      case Prim::Line:
        for (std::size_t i = 1; i < p.pts.size(); ++i)
          cv.line(p.pts[i - 1].first, p.pts[i - 1].second, p.pts[i].first, p.pts[i].second, p.a, p.color);
        break;
      case Prim::Marker:
        cv.disc(p.a, p.b, p.c, p.color);
        break;
      case Prim::Text: {
        const double tw = text_width(p.s, p.size);
        const double x = p.anchor == Anchor::Start ? p.a : p.anchor == Anchor::Middle ? p.a - tw / 2 : p.a - tw;
        cv.glyphs(x, p.b, p.s, p.size, p.color);
        break;
      }
    }
  }
  return std::move(cv.px);
}

std::vector<fs::path> Figure::save(const fs::path& stem) const {
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  fs::path svg_path = stem, png_path = stem;
  svg_path += ".svg";
  png_path += ".png";
  std::ofstream(svg_path, std::ios::binary | std::ios::trunc) << svg();
  write_png(png_path, w_, h_, raster());
  return {svg_path, png_path};
}

void write_png(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) throw std::invalid_argument("write_png: buffer size");
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) png_write_row(png, rgb.data() + static_cast<std::size_t>(y) * width * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

Color colormap(double v) {
  // viridis control points
  static const std::array<std::array<double, 3>, 5> cp{{{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98},
                                                        {253, 231, 37}}};
  if (!std::isfinite(v)) v = 0.0;
  v = std::clamp(v, 0.0, 1.0) * (cp.size() - 1);
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(v), cp.size() - 2);
  const double u = v - static_cast<double>(i);
  auto mix = [&](int k) { return static_cast<std::uint8_t>(std::lround(cp[i][k] + u * (cp[i + 1][k] - cp[i][k]))); };
  return {mix(0), mix(1), mix(2)};
}

PlotSummary plot_estimation(const Tensor& prediction, const Tensor& truth, const std::string& title, const fs::path& stem) {
  require_same_shape(prediction.shape(), truth.shape(), "plot_estimation");
  if (prediction.rank() != 2 || prediction.dim(0) != 2) throw ShapeError("plot_estimation: expected 2 x t windows");
  const int t = prediction.dim(1);
  double hi = 1.0;
  for (float v : prediction.values()) hi = std::max(hi, static_cast<double>(v));
  for (float v : truth.values()) hi = std::max(hi, static_cast<double>(v));
  double lo = 0.0;
  for (float v : prediction.values()) lo = std::min(lo, static_cast<double>(v));

  Figure f(900, 380);
  f.text(450, 10, title, 16, Anchor::Middle);
  PlotSummary out;
  const char* feet[2] = {"Left foot", "Right foot"};
  for (int foot = 0; foot < 2; ++foot) {
    const Axes a{70.0 + foot * 430.0, 70.0, 360.0, 250.0, 0.0, static_cast<double>(std::max(t - 1, 1)), lo, hi * 1.05};
    f.text(a.x + a.w / 2, 44, feet[foot], 8, Anchor::Middle);
    draw_axes(f, a, "time step", "GRF (normalized)");
    for (const auto* src : {&truth, &prediction}) {
      std::vector<std::pair<double, double>> pts;
      for (int i = 0; i < t; ++i) pts.emplace_back(a.px(i), a.py((*src)[static_cast<std::size_t>(foot) * t + i]));
      f.polyline(std::move(pts), src == &truth ? kTruth : kPred, 1.8);
      ++out.curves;
    }
    ++out.panels;
  }
  f.polyline({{700, 24}, {720, 24}}, kTruth, 2.0);
  f.text(726, 20, "ground truth", 8);
  f.polyline({{700, 38}, {720, 38}}, kPred, 2.0);
  f.text(726, 34, "prediction", 8);
  out.files = f.save(stem);
  return out;
}

CorrmapPanel corrmap_panel(const std::string& model, const TensorD& tap, const losses::SckdParams& params, int t_target) {
  if (tap.rank() < 3) throw ShapeError("corrmap_panel: expected a b x c x t[...] tap");
  const int b = tap.dim(0);
  CorrmapPanel p;
  p.model = model;
  p.M = losses::sp_map(tap.reshaped({b, static_cast<int>(tap.size() / b)}));
  const TensorD pooled = losses::align_teacher(tap, t_target > 0 ? t_target : tap.dim(2));
  const int c = pooled.dim(1), t = pooled.dim(2);
  p.channels = losses::select_channel_indices(c, params.q);
  for (int k : p.channels) {
    TensorD F({b, t});
    for (int i = 0; i < b; ++i)
      for (int s = 0; s < t; ++s)
        F[static_cast<std::size_t>(i) * t + s] = pooled[(static_cast<std::size_t>(i) * c + k) * t + s];
    p.G.push_back(losses::rbf_correlation_map(F, params.gamma, params.kernel_mode, params.order));
  }
  return p;
}

PlotSummary plot_corrmap(const std::vector<CorrmapPanel>& rows, const std::string& title, const fs::path& stem) {
  if (rows.empty()) throw std::invalid_argument("plot_corrmap: no models");
  std::size_t cols = 0;
  std::vector<const TensorD*> ms, gs;
  for (const auto& r : rows) {
    cols = std::max(cols, r.G.size());
    ms.push_back(&r.M);
    for (const auto& g : r.G) gs.push_back(&g);
  }
  const double size = 96, gap = 12, left = 110, top = 60;
  const int width = static_cast<int>(left + (cols + 1) * (size + gap) + 20);
  const int height = static_cast<int>(top + rows.size() * (size + 26) + 70);
  Figure f(std::max(width, 420), height);
  f.text(f.width() / 2.0, 10, title, 16, Anchor::Middle);
  const auto [mlo, mhi] = value_range(ms);
  const auto [glo, ghi] = value_range(gs);
  PlotSummary out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double y = top + r * (size + 26);
    f.text(10, y + size / 2 - 4, rows[r].model, 8);
    heatmap(f, left, y, size, rows[r].M, mlo, mhi);
    if (r == 0) f.text(left + size / 2, y - 14, "M", 8, Anchor::Middle);
    for (std::size_t k = 0; k < rows[r].G.size(); ++k) {
      const double x = left + (k + 1) * (size + gap);
      heatmap(f, x, y, size, rows[r].G[k], glo, ghi);
      if (r == 0) f.text(x + size / 2, y - 14, "G ch " + std::to_string(rows[r].channels[k]), 8, Anchor::Middle);
      ++out.heatmaps;
    }
    ++out.panels;
  }
  const double by = top + rows.size() * (size + 26) + 24;
  colorbar(f, left, by, 160, "M", mlo, mhi);
  colorbar(f, left + 220, by, 160, "G", glo, ghi);
  out.files = f.save(stem);
  return out;
}

PlotSummary plot_sensitivity(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& err,
                             const std::string& xlabel, const std::string& ylabel, const std::string& title,
                             const fs::path& stem) {
  if (x.empty() || x.size() != y.size() || (!err.empty() && err.size() != y.size())) {
    throw std::invalid_argument("plot_sensitivity: x, y and err lengths differ or are empty");
  }
  std::vector<std::size_t> order(x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  double ylo = 1e300, yhi = -1e300;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = err.empty() ? 0.0 : err[i];
    ylo = std::min(ylo, y[i] - e);
    yhi = std::max(yhi, y[i] + e);
  }
  const double pad = std::max((yhi - ylo) * 0.1, 1e-3);
  double xlo = x[order.front()], xhi = x[order.back()];
  if (xhi - xlo < 1e-12) {
    xlo -= 1;
    xhi += 1;
  }
  const double xpad = (xhi - xlo) * 0.05;
  Figure f(560, 380);
  f.text(280, 10, title, 16, Anchor::Middle);
  const Axes a{80, 60, 450, 270, xlo - xpad, xhi + xpad, ylo - pad, yhi + pad};
  draw_axes(f, a, xlabel, ylabel);
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i : order) {
    pts.emplace_back(a.px(x[i]), a.py(y[i]));
    if (!err.empty() && err[i] > 0) f.polyline({{a.px(x[i]), a.py(y[i] - err[i])}, {a.px(x[i]), a.py(y[i] + err[i])}}, kGrey, 1.0);
  }
  f.polyline(pts, kCurve, 2.0);
  PlotSummary out;
  for (const auto& p : pts) {
    f.marker(p.first, p.second, 3.5, kCurve);
    ++out.points;
  }
  out.panels = 1;
  out.curves = 1;
  out.files = f.save(stem);
  return out;
}

}  // namespace sckd::plot
