#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lodstream/error.hpp"
#include "lodstream/io.hpp"
#include "lodstream/pipeline.hpp"
#include "lodstream/render.hpp"
#include "lodstream/report.hpp"
#include "lodstream/service.hpp"

namespace {

using namespace lodstream;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted.store(true); }

struct InputOptions {
  std::string path;
  std::vector<std::string> synthetic;
  std::vector<double> bounds;
};

struct TreeOptions {
  std::uint32_t threshold = kDefaultLeafThreshold;
  std::uint32_t chunk_size = kDefaultChunkCapacity;
  std::uint32_t grid = kDefaultGridResolution;
  std::uint32_t max_depth = kDefaultMaxDepth;
  std::size_t arena_bytes = kDefaultArenaCapacity;
  std::size_t batch_size = kDefaultBatchSize;
  double budget_ms = kDefaultBudgetMs;
  std::size_t backlog = kDefaultBacklogCapacity;
  std::size_t spill = 10'000'000;
  bool racy = false;
  int threads = 0;
  unsigned workers = 1;
};

struct CameraOptions {
  std::vector<double> position;
  std::vector<double> target;
  std::vector<double> up;
  double fov = 60.0;
  std::optional<double> near;
  std::optional<double> far;
  std::uint32_t width = 800;
  std::uint32_t height = 600;
};

void add_input(CLI::App& cmd, InputOptions& in, bool allow_synthetic = true) {
  cmd.add_option("file", in.path, "Input point file (.las or .sim)");
  if (allow_synthetic) {
    cmd.add_option("--synthetic", in.synthetic, "Generated input instead of a file: KIND N SEED (uniform|surface)")
        ->expected(3);
  }
  cmd.add_option("--bounds", in.bounds, "Root cube as MINX MINY MINZ SIZE")->expected(4);
}

void add_tree(CLI::App& cmd, TreeOptions& t) {
  cmd.add_option("--threshold", t.threshold, "Leaf point threshold T")->check(CLI::PositiveNumber);
  cmd.add_option("--chunk-size", t.chunk_size, "Samples per chunk C")->check(CLI::PositiveNumber);
  cmd.add_option("--grid", t.grid, "Sampling grid resolution G")->check(CLI::Range(1, 1024));
  cmd.add_option("--max-depth", t.max_depth, "Maximum octree depth");
  cmd.add_option("--arena-bytes", t.arena_bytes, "Arena reservation in bytes");
  cmd.add_option("--batch-size", t.batch_size, "Points per batch")->check(CLI::PositiveNumber);
  cmd.add_option("--budget-ms", t.budget_ms, "Update time budget per frame");
  cmd.add_option("--backlog", t.backlog, "Voxel backlog capacity");
  cmd.add_option("--spill", t.spill, "Spill buffer capacity");
  cmd.add_flag("--racy", t.racy, "First-come voxel sampling across threads (non-deterministic)");
  cmd.add_option("--threads", t.threads, "Update worker threads (0 = all cores)");
  cmd.add_option("--workers", t.workers, "Ingestion worker threads")->check(CLI::PositiveNumber);
}

void add_camera(CLI::App& cmd, CameraOptions& c) {
  cmd.add_option("--camera-pos", c.position, "Camera position X Y Z")->expected(3);
  cmd.add_option("--camera-target", c.target, "Look-at point X Y Z")->expected(3);
  cmd.add_option("--camera-up", c.up, "Up vector X Y Z")->expected(3);
  cmd.add_option("--fov", c.fov, "Vertical field of view in degrees");
  cmd.add_option("--near", c.near, "Near plane distance");
  cmd.add_option("--far", c.far, "Far plane distance");
  cmd.add_option("--width", c.width, "Image width")->check(CLI::PositiveNumber);
  cmd.add_option("--height", c.height, "Image height")->check(CLI::PositiveNumber);
}

Vec3 vec3(const std::vector<double>& v) { return {v[0], v[1], v[2]}; }

std::optional<CubeBounds> bounds_option(const InputOptions& in) {
  if (in.bounds.empty()) {
    return std::nullopt;
  }
  if (!(in.bounds[3] > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "--bounds size must be positive");
  }
  return CubeBounds{{in.bounds[0], in.bounds[1], in.bounds[2]}, in.bounds[3]};
}

struct Input {
  std::shared_ptr<const PointFile> file;
  std::string name;
  std::optional<CubeBounds> bounds;
};

Input open_input(const InputOptions& in) {
  Input out;
  if (!in.synthetic.empty()) {
    if (!in.path.empty()) {
      throw Error(ErrorCode::InvalidArgument, "give either a file or --synthetic, not both");
    }
    const SyntheticKind kind = parse_synthetic_kind(in.synthetic[0]);
    const std::size_t n = std::stoull(in.synthetic[1]);
    const std::uint64_t seed = std::stoull(in.synthetic[2]);
    out.file = memory_point_file(make_synthetic(kind, n, seed));
    out.name = "synthetic:" + in.synthetic[0] + ":" + in.synthetic[1] + ":" + in.synthetic[2];
  } else {
    if (in.path.empty()) {
      throw Error(ErrorCode::InvalidArgument, "no input: give a file or --synthetic KIND N SEED");
    }
    out.file = open_point_file(in.path);
    out.name = in.path;
    if (detect_format(in.path) == FileFormat::Las && out.file->point_count() > 0) {
      out.bounds = las_open(in.path).bounds();
    }
  }
  if (auto b = bounds_option(in)) {
    out.bounds = b;
  }
  return out;
}

BuildOptions build_options(const TreeOptions& t, const Input& input) {
  BuildOptions o;
  o.tree.leaf_threshold = t.threshold;
  o.tree.chunk_capacity = t.chunk_size;
  o.tree.grid_resolution = t.grid;
  o.tree.max_depth = t.max_depth;
  o.tree.arena_capacity = t.arena_bytes;
  o.update.budget_ms = t.budget_ms;
  o.update.backlog_capacity = t.backlog;
  o.update.spill_capacity = t.spill;
  o.update.deterministic = !t.racy;
  o.update.threads = t.threads;
  o.reader.batch_size = t.batch_size;
  o.reader.workers = t.workers;
  o.bounds = input.bounds;
  return o;
}

Camera make_camera(const CameraOptions& c, const CubeBounds& bounds) {
  Camera camera = overview_camera(bounds, c.width, c.height);
  camera.vertical_fov_deg = c.fov;
  if (!c.position.empty()) {
    camera.position = vec3(c.position);
  }
  if (!c.target.empty()) {
    camera.target = vec3(c.target);
  }
  if (!c.up.empty()) {
    camera.up = vec3(c.up);
  }
  if (!c.position.empty()) {
    const Vec3 center = bounds.center();
    const double d = std::hypot(camera.position[0] - center[0], camera.position[1] - center[1],
                                camera.position[2] - center[2]);
    camera.near = bounds.size * 1e-4;
    camera.far = d + 2.0 * bounds.size;
  }
  if (c.near) {
    camera.near = *c.near;
  }
  if (c.far) {
    camera.far = *c.far;
  }
  camera.validate();
  return camera;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text << '\n';
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot write " + path);
  }
}

int cmd_build(const InputOptions& in, const TreeOptions& t, const std::string& stats, bool json) {
  const Input input = open_input(in);
  const BuildResult result = build_tree(input.file, build_options(t, input), input.name);
  std::cout << (json ? to_json(result.report) : to_text(result.report)) << '\n';
  if (!stats.empty()) {
    write_text(stats, to_json(result.report));
  }
  return result.report.checks_passed() ? 0 : 1;
}

int cmd_render(const InputOptions& in, const TreeOptions& t, const CameraOptions& c, const std::string& mode,
               double lod_px, bool show_nodes, const std::string& out_path, const std::string& stats) {
  const Input input = open_input(in);
  nlohmann::ordered_json j;
  Framebuffer fb(1, 1);
  if (mode == "brute") {
    std::vector<Point> points;
    input.file->read(0, input.file->point_count(), points);
    const CubeBounds bounds = input.bounds ? *input.bounds : bounds_of(points);
    const Camera camera = make_camera(c, bounds);
    const auto started = std::chrono::steady_clock::now();
    fb = brute_force_render(points, camera);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    std::printf("mode brute, points %zu, duration %.3f ms, covered pixels %zu\n", points.size(), ms,
                fb.covered_pixels());
    j = {{"mode", mode}, {"points", points.size()}, {"durationMs", ms}, {"coveredPixels", fb.covered_pixels()}};
  } else {
    const BuildResult built = build_tree(input.file, build_options(t, input), input.name);
    const Camera camera = make_camera(c, built.tree->bounds());
    const VisibleSet visible = select_visible(*built.tree, camera, lod_px);
    RenderStats rs;
    fb = rasterize(visible, camera, &rs);
    std::size_t overlay = 0;
    if (show_nodes) {
      overlay = draw_node_boxes(fb, visible, camera);
    }
    std::printf("mode lod, points %llu, voxels %llu, nodes %zu, duration %.3f ms, covered pixels %zu\n",
                static_cast<unsigned long long>(rs.points), static_cast<unsigned long long>(rs.voxels), rs.nodes,
                rs.duration_ms, fb.covered_pixels());
    if (show_nodes) {
      std::printf("node overlay pixels %zu\n", overlay);
    }
    j = {{"mode", mode},           {"points", rs.points},        {"voxels", rs.voxels},
         {"nodes", rs.nodes},      {"durationMs", rs.duration_ms}, {"coveredPixels", fb.covered_pixels()},
         {"overlayPixels", overlay}};
  }
  write_image(fb, out_path);
  std::printf("wrote %s\n", out_path.c_str());
  if (!stats.empty()) {
    write_text(stats, j.dump(2));
  }
  return 0;
}

int cmd_convert(const std::string& in, const std::string& out) {
  const auto file = open_point_file(in);
  std::vector<Point> points;
  file->read(0, file->point_count(), points);
  sim_write(out, points);
  std::printf("wrote %zu points to %s\n", points.size(), out.c_str());
  return 0;
}

int cmd_sort_morton(const std::string& in, const std::string& out, const InputOptions& opts) {
  morton_sort(in, out, bounds_option(opts));
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_serve(const InputOptions& in, const TreeOptions& t, const std::string& host, std::uint16_t port,
              double throttle_mps, bool once) {
  const Input input = open_input(in);
  const BuildOptions b = build_options(t, input);
  StreamConfig config;
  config.tree = b.tree;
  config.update = b.update;
  config.reader = b.reader;
  config.reader.throttle_pps = throttle_mps * 1e6;
  config.bounds = b.bounds;

  EventLog log;
  WsServer server(log, host, port);
  server.start();
  std::printf("serving %s on ws://%s:%u\n", input.name.c_str(), host.c_str(), server.port());
  std::fflush(stdout);

  StreamProducer producer(input.file, config, log);
  producer.run(&g_interrupted);
  if (producer.error()) {
    std::fprintf(stderr, "stream failed: %s\n", producer.error()->c_str());
  } else {
    std::printf("stream complete: %llu points, %zu nodes, %zu messages, %.1f MB\n",
                static_cast<unsigned long long>(producer.totals().points_inserted), producer.tree().node_count(),
                log.size(), log.bytes() / 1e6);
  }
  std::fflush(stdout);
  if (once) {
    server.wait_until_drained(&g_interrupted);
  } else {
    while (!g_interrupted.load()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  }
  server.stop();
  return producer.error() && !g_interrupted.load() ? 1 : 0;
}

int cmd_bench(const InputOptions& in, const TreeOptions& t, const CameraOptions& c, std::vector<std::uint32_t> sizes,
              int render_repeats, const std::string& stats) {
  const Input input = open_input(in);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::printf("%10s %14s %16s %12s %10s\n", "chunk", "construct ms", "chunk bytes", "render ms", "nodes");
  for (std::uint32_t size : sizes) {
    TreeOptions local = t;
    local.chunk_size = size;
    const BuildResult built = build_tree(input.file, build_options(local, input), input.name);
    const Camera camera = make_camera(c, built.tree->bounds());
    const VisibleSet visible = select_visible(*built.tree, camera);
    std::vector<double> times;
    for (int i = 0; i < std::max(1, render_repeats); ++i) {
      RenderStats rs;
      rasterize(visible, camera, &rs);
      times.push_back(rs.duration_ms);
    }
    std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
    const double render_ms = times[times.size() / 2];
    const RunReport& r = built.report;
    std::printf("%10u %14.1f %16llu %12.2f %10zu\n", size, r.update.update_ms,
                static_cast<unsigned long long>(r.tree.chunk_bytes), render_ms, r.tree.nodes);
    rows.push_back({{"chunkSize", size},
                    {"constructMs", r.update.update_ms},
                    {"chunkBytes", r.tree.chunk_bytes},
                    {"allocatedChunkBytes", r.chunks_allocated * (16 + std::uint64_t{size} * 16)},
                    {"renderMs", render_ms},
                    {"nodes", r.tree.nodes},
                    {"checksPassed", r.checks_passed()}});
  }
  if (!stats.empty()) {
    write_text(stats, nlohmann::ordered_json{{"input", input.name}, {"rows", rows}}.dump(2));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incremental level-of-detail octree construction, rendering and streaming for point clouds"};
  app.require_subcommand(1);

  InputOptions input;
  TreeOptions tree;
  CameraOptions camera;
  std::string stats;

  auto* build = app.add_subcommand("build", "Build the octree and report throughput and tree statistics");
  add_input(*build, input);
  add_tree(*build, tree);
  bool json = false;
  build->add_option("--stats", stats, "Write the JSON report to this file");
  build->add_flag("--json", json, "Print the JSON report instead of text");

  auto* render = app.add_subcommand("render", "Render one frame to a PPM image");
  add_input(*render, input);
  add_tree(*render, tree);
  add_camera(*render, camera);
  std::string mode = "lod";
  double lod_px = kDefaultLodThresholdPx;
  bool show_nodes = false;
  std::string out_path = "frame.ppm";
  render->add_option("--mode", mode, "lod or brute")->check(CLI::IsMember({"lod", "brute"}));
  render->add_option("--lod-threshold", lod_px, "Screen size in pixels above which nodes are refined");
  render->add_flag("--show-nodes", show_nodes, "Overlay wireframes of the rendered nodes");
  render->add_option("-o,--out", out_path, "Output image");
  render->add_option("--stats", stats, "Write render statistics as JSON");

  std::string convert_in, convert_out;
  auto* convert = app.add_subcommand("convert", "Convert LAS (or SIM) to SIM");
  convert->add_option("input", convert_in, "Input file")->required();
  convert->add_option("output", convert_out, "Output .sim file")->required();

  auto* sort = app.add_subcommand("sort-morton", "Write a Morton-ordered copy of a SIM file");
  sort->add_option("input", convert_in, "Input .sim file")->required();
  sort->add_option("output", convert_out, "Output .sim file")->required();
  sort->add_option("--bounds", input.bounds, "Cube used for Morton keys: MINX MINY MINZ SIZE")->expected(4);

  auto* serve = app.add_subcommand("serve", "Stream octree updates to WebSocket clients");
  add_input(*serve, input);
  add_tree(*serve, tree);
  std::string host = "127.0.0.1";
  std::uint16_t port = 8080;
  double throttle = 0.0;
  bool once = false;
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks a free port)");
  serve->add_option("--throttle-mps", throttle, "Limit ingestion to this many million points per second");
  serve->add_flag("--once", once, "Exit once the stream is complete and connected clients have received it");

  auto* bench = app.add_subcommand("bench", "Sweep chunk sizes and report construction, memory and render time");
  add_input(*bench, input);
  add_tree(*bench, tree);
  add_camera(*bench, camera);
  std::vector<std::uint32_t> sizes{500, 1000, 2000, 5000, 10000};
  int repeats = 5;
  bench->add_option("--sizes", sizes, "Chunk sizes to sweep");
  bench->add_option("--render-repeats", repeats, "Renders per size; the median is reported");
  bench->add_option("--stats", stats, "Write the sweep as JSON");

  CLI11_PARSE(app, argc, argv);

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  try {
    if (*build) {
      return cmd_build(input, tree, stats, json);
    }
    if (*render) {
      return cmd_render(input, tree, camera, mode, lod_px, show_nodes, out_path, stats);
    }
    if (*convert) {
      return cmd_convert(convert_in, convert_out);
    }
    if (*sort) {
      return cmd_sort_morton(convert_in, convert_out, input);
    }
    if (*serve) {
      return cmd_serve(input, tree, host, port, throttle, once);
    }
    if (*bench) {
      return cmd_bench(input, tree, camera, sizes, repeats, stats);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
