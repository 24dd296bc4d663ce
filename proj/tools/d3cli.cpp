// d3cli: degrade, learn dictionaries, train, restore, evaluate, benchmark and
// cost the D3 restoration model. Exit status 0 on success, 1 for invalid
// input, 2 for I/O failures.

#include <d3/d3.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace d3;

namespace {

std::vector<fs::path> list_pgm(const fs::path& where) {
  if (fs::is_regular_file(where)) return {where};
  if (!fs::is_directory(where)) throw IoError("no such file or directory: " + where.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(where))
    if (e.is_regular_file() && e.path().extension() == ".pgm") out.push_back(e.path());
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  if (out.empty()) throw ValidationError("no .pgm images in " + where.string());
  return out;
}

std::vector<GrayImage> load_all(const std::vector<fs::path>& paths) {
  std::vector<GrayImage> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(load_gray(p));
  return out;
}

template <class T>
std::vector<T> parse_list(const std::string& text, const std::string& what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw ValidationError("bad " + what + " entry '" + item + "' in '" + text + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("empty " + what + " list");
  return out;
}

std::string group_thousands(std::uint64_t v) {
  std::string s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

fs::path sidecar_path(const fs::path& image) {
  fs::path p = image;
  return p.replace_extension(".blocks");
}

/// Sidecar blocks when present; otherwise re-quantized from pixels at `quality`.
BlockGrid blocks_for(const fs::path& image_path, const GrayImage& img, int quality) {
  const fs::path side = sidecar_path(image_path);
  if (fs::exists(side)) {
    BlockGrid g = parse_blocks(read_file(side));
    if (g.block_rows != (img.height + kBlockSide - 1) / kBlockSide ||
        g.block_cols != (img.width + kBlockSide - 1) / kBlockSide)
      throw ValidationError(side.string() + " does not match the image size");
    if (g.blocks.front().spec.quality != quality)
      std::cerr << "warning: " << side.string() << " is quality " << g.blocks.front().spec.quality
                << " but the model was trained at " << quality << "\n";
    return g;
  }
  std::cerr << "warning: no " << side.filename().string() << "; re-quantizing at quality " << quality << "\n";
  return requantize_blocks(img, jpeg::scaled_quant_table(quality));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

sparse::Dictionary dictionary_from_stage(const net::SparseStage& s, double sparsity) {
  Eigen::MatrixXd atoms = s.synthesis;
  sparse::normalize_columns(atoms);
  return {atoms, sparsity};
}

std::string history_csv(const std::vector<net::EpochRecord>& h) {
  std::string out = "epoch,train_loss,box_loss,l2_loss,val_psnr\n";
  char buf[256];
  for (const auto& r : h) {
    std::snprintf(buf, sizeof buf, "%d,%.9e,%.9e,%.9e,%.6f\n", r.epoch, r.train_loss, r.box_loss, r.l2_loss, r.val_psnr);
    out += buf;
  }
  return out;
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

// ---------------------------------------------------------------------------

struct CodecArgs {
  std::string in, out;
  int quality = 0;
};

fs::path run_codec(const CodecArgs& a) {
  const auto paths = list_pgm(a.in);
  const jpeg::QuantSpec spec = jpeg::scaled_quant_table(a.quality);
  fs::create_directories(a.out);
  for (const auto& p : paths) {
    const DegradedImage d = degrade_image(load_gray(p), spec);
    const fs::path dst = fs::path(a.out) / p.filename();
    save_gray(d.image, dst);
    write_file(sidecar_path(dst), encode_blocks(d.blocks));
    std::cout << dst.string() << "\n";
  }
  return fs::path(a.out) / "manifest.txt";
}

struct DictArgs {
  std::string data, out;
  int quality = 10;
  int atoms = 128;
  double sparsity = 0.02;
  int rounds = 10;
  std::uint64_t seed = 0;
  std::size_t patches = 20000;
};

fs::path run_train_dicts(const DictArgs& a) {
  const auto images = load_all(list_pgm(a.data));
  const auto pairs = build_training_set(images, {a.quality, a.patches, a.seed, false});
  net::DictionaryTrainingOptions opt;
  opt.p_phi = opt.p_psi = a.atoms;
  opt.sparsity = a.sparsity;
  opt.rounds = a.rounds;
  opt.max_patches = a.patches;
  opt.seed = a.seed;
  bool degenerate = false;
  net::DictionaryPair dicts = net::learn_dictionaries(net::to_tensors(pairs), opt, &degenerate);
  dicts.quality = a.quality;
  if (degenerate) std::cerr << "warning: training patches are all zero; dictionaries are random\n";
  ckpt::save_model(dicts, a.out);
  std::cout << a.out << "\n";
  return with_suffix(a.out, ".manifest");
}

struct TrainArgs {
  std::string data, out, quality = "10", init = "sparse", arch = "d3", dicts, scaling = "lipschitz";
  int p_phi = 128, p_psi = 128, epochs = 20, rounds = 10, patience = 10;
  double lr = 0.01, momentum = 0.0, sparsity = 0.02, val_fraction = 0.1, box_weight = 1.0;
  std::size_t batch = 128, patches = 100000;
  std::uint64_t seed = 0;
};

net::TrainConfig train_config(const TrainArgs& a) {
  net::TrainConfig cfg;
  cfg.learning_rate = a.lr;
  cfg.batch_size = a.batch;
  cfg.momentum = a.momentum;
  cfg.epochs = a.epochs;
  cfg.seed = a.seed;
  cfg.validation_fraction = a.val_fraction;
  cfg.patience = a.patience;
  cfg.loss_weights.box = a.box_weight;
  cfg.on_epoch = [](const net::EpochRecord& r) {
    std::cerr << "epoch " << r.epoch << " loss " << r.train_loss << " box " << r.box_loss << " val_psnr "
              << fmt(r.val_psnr, 3) << "\n";
  };
  net::validate(cfg);
  return cfg;
}

fs::path run_train(const TrainArgs& a) {
  const auto qualities = parse_list<int>(a.quality, "quality");
  for (int q : qualities) jpeg::scaled_quant_table(q);
  for (std::size_t i = 1; i < qualities.size(); ++i)
    if (qualities[i] >= qualities[i - 1]) throw ValidationError("--quality chain must be strictly decreasing");
  const net::TrainConfig cfg = train_config(a);
  const auto images = load_all(list_pgm(a.data));
  auto data_for = [&](int q) { return net::to_tensors(build_training_set(images, {q, a.patches, a.seed, false})); };
  auto out_for = [&](int q) {
    if (qualities.size() == 1) return fs::path(a.out);
    const fs::path base(a.out);
    return base.parent_path() / (base.stem().string() + "_q" + std::to_string(q) + base.extension().string());
  };

  if (a.arch == "dbase") {
    if (qualities.size() != 1) throw ValidationError("quality chains are only supported for --arch d3");
    net::DBaseModel init;
    if (a.init == "random") init = net::init_dbase(a.p_phi, a.p_psi, a.seed);
    else if (a.init.rfind("checkpoint:", 0) == 0) init = ckpt::load_model<net::DBaseModel>(a.init.substr(11));
    else throw ValidationError("--arch dbase supports --init random or checkpoint:PATH");
    net::DBaseModel trained = net::train(data_for(qualities[0]), cfg, init);
    trained.meta.quality = qualities[0];
    ckpt::save_model(trained, a.out);
    write_file(with_suffix(a.out, ".history.csv"), history_csv(trained.meta.history));
    std::cout << a.out << "\n";
    return with_suffix(a.out, ".manifest");
  }
  if (a.arch != "d3") throw ValidationError("--arch must be d3 or dbase");

  net::D3Model init;
  if (a.init == "sparse") {
    net::DictionaryPair dicts;
    if (!a.dicts.empty()) {
      dicts = ckpt::load_model<net::DictionaryPair>(a.dicts);
    } else {
      net::DictionaryTrainingOptions opt;
      opt.p_phi = a.p_phi;
      opt.p_psi = a.p_psi;
      opt.sparsity = a.sparsity;
      opt.rounds = a.rounds;
      opt.seed = a.seed;
      dicts = net::learn_dictionaries(data_for(qualities[0]), opt);
    }
    net::InitScaling scaling;
    if (a.scaling == "lipschitz") scaling = net::InitScaling::lipschitz;
    else if (a.scaling == "unit") scaling = net::InitScaling::unit_step;
    else throw ValidationError("--sparse-scaling must be lipschitz or unit");
    init = net::init_from_sparse(dicts.phi, dicts.psi, scaling);
  } else if (a.init == "random") {
    init = net::init_random(a.p_phi, a.p_psi, a.seed);
  } else if (a.init.rfind("checkpoint:", 0) == 0) {
    init = ckpt::load_model<net::D3Model>(a.init.substr(11));
  } else {
    throw ValidationError("--init must be sparse, random or checkpoint:PATH");
  }

  const auto models = transfer_chain(qualities, cfg, std::move(init), data_for,
                                     [](int q, const net::D3Model&) { std::cerr << "training quality " << q << "\n"; });
  for (std::size_t i = 0; i < models.size(); ++i) {
    const fs::path dst = out_for(qualities[i]);
    ckpt::save_model(models[i], dst);
    write_file(with_suffix(dst, ".history.csv"), history_csv(models[i].meta.history));
    std::cout << dst.string() << "\n";
  }
  return with_suffix(a.out, ".manifest");
}

struct RestoreArgs {
  std::string model, in, out, project = "exact", ref, costs;
  int stride = 4;
  int iters = 100;
  bool quantize_output = false;
};

fs::path run_restore(const RestoreArgs& a) {
  const ckpt::AnyModel model = ckpt::load_any(a.model);
  const RestoreOptions opt{a.stride, parse_project_mode(a.project)};
  const auto paths = list_pgm(a.in);
  const bool to_dir = fs::is_directory(a.in);
  if (to_dir) fs::create_directories(a.out);
  CostTable costs;
  for (const auto& p : paths) {
    const GrayImage img = load_gray(p);
    Restored r;
    std::optional<std::uint64_t> per_patch;
    const auto t0 = std::chrono::steady_clock::now();
    if (const auto* d3m = std::get_if<net::D3Model>(&model)) {
      r = restore_image(*d3m, img, blocks_for(p, img, d3m->meta.quality), opt);
      per_patch = complexity::count_multiplies(*d3m).actual();
    } else if (const auto* db = std::get_if<net::DBaseModel>(&model)) {
      r = restore_image(*db, img, a.stride);
      per_patch = static_cast<std::uint64_t>(2 * kBlockSize * (db->p_phi() + db->p_psi()));
    } else {
      const auto& dicts = std::get<net::DictionaryPair>(model);
      sparse::DualDomainConfig cfg;
      cfg.max_iters = a.iters;
      const sparse::DualDomainSolver solver(dicts.phi, dicts.psi, cfg);
      r = restore_image(solver, img, blocks_for(p, img, dicts.quality), a.stride);
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const fs::path dst = to_dir ? fs::path(a.out) / p.filename() : fs::path(a.out);
    costs[dst.filename().string()] = {ms, per_patch ? std::optional(*per_patch * r.stats.patches) : std::nullopt};
    save_gray(r.image, dst);
    std::cout << dst.string();
    if (!a.ref.empty()) {
      const fs::path ref_path = fs::is_directory(a.ref) ? fs::path(a.ref) / p.filename() : fs::path(a.ref);
      const GrayImage ref = load_gray(ref_path);
      const GrayImage out = a.quantize_output ? quantize_pixels(r.image) : r.image;
      std::cout << " psnr_in " << fmt(metrics::psnr(ref, img), 4) << " psnr_out " << fmt(metrics::psnr(ref, out), 4);
    }
    std::cout << "\n";
  }
  if (!a.costs.empty()) write_file(a.costs, encode_costs(costs));
  return to_dir ? fs::path(a.out) / "manifest.txt" : with_suffix(a.out, ".manifest");
}

struct EvalArgs {
  std::string ref, test, out, markdown, costs, metrics = "psnr,ssim,psnrb";
};

fs::path run_eval(const EvalArgs& a) {
  EvalReport report{parse_metrics(a.metrics), {}};
  const auto refs = list_pgm(a.ref);
  const auto tests = list_pgm(a.test);
  auto names = [](const std::vector<fs::path>& v) {
    std::vector<std::string> out;
    for (const auto& p : v) out.push_back(p.filename().string());
    return out;
  };
  const auto ref_names = names(refs), test_names = names(tests);
  for (const auto& n : ref_names)
    if (!std::binary_search(test_names.begin(), test_names.end(), n))
      throw ValidationError("unmatched file: " + n + " has no counterpart in " + a.test);
  for (const auto& n : test_names)
    if (!std::binary_search(ref_names.begin(), ref_names.end(), n))
      throw ValidationError("unmatched file: " + n + " has no counterpart in " + a.ref);
  for (std::size_t i = 0; i < refs.size(); ++i) report.add(ref_names[i], load_gray(refs[i]), load_gray(tests[i]));
  if (!a.costs.empty()) report.attach(parse_costs(read_file(a.costs)));
  write_file(a.out, to_csv(report));
  const fs::path md = a.markdown.empty() ? fs::path(a.out).replace_extension(".md") : fs::path(a.markdown);
  write_file(md, to_markdown(report));
  std::cout << to_markdown(report);
  return with_suffix(a.out, ".manifest");
}

struct BenchArgs {
  std::string model, image, dicts, out, project = "exact";
  int repeat = 5, stride = 4, iters = 100;
  double sparsity = 0.02;
};

fs::path run_bench(const BenchArgs& a) {
  if (a.repeat < 1) throw ValidationError("--repeat must be >= 1");
  const net::D3Model model = ckpt::load_model<net::D3Model>(a.model);
  const GrayImage img = load_gray(a.image);
  const BlockGrid blocks = blocks_for(a.image, img, model.meta.quality);
  const RestoreOptions opt{a.stride, parse_project_mode(a.project)};

  sparse::Dictionary phi, psi;
  if (!a.dicts.empty()) {
    const auto d = ckpt::load_model<net::DictionaryPair>(a.dicts);
    phi = d.phi;
    psi = d.psi;
  } else {
    phi = dictionary_from_stage(model.stage1, a.sparsity);
    psi = dictionary_from_stage(model.stage2, a.sparsity);
  }
  sparse::DualDomainConfig cfg;
  cfg.max_iters = a.iters;
  const sparse::DualDomainSolver solver(phi, psi, cfg);

  using Clock = std::chrono::steady_clock;
  std::vector<double> d3_total, d3_net, base_total, base_net;
  for (int i = 0; i < a.repeat; ++i) {
    auto t0 = Clock::now();
    const Restored r = restore_image(model, img, blocks, opt);
    d3_total.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    d3_net.push_back(r.stats.network_seconds);
    t0 = Clock::now();
    const Restored b = restore_image(solver, img, blocks, a.stride);
    base_total.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    base_net.push_back(b.stats.network_seconds);
  }
  const auto counts = complexity::count_multiplies(model);
  const auto theory = complexity::d3_complexity(static_cast<std::uint64_t>(model.p_phi()),
                                                static_cast<std::uint64_t>(model.p_psi()), kBlockSize);
  std::ostringstream os;
  os << "metric,value\n";
  os << "repeat," << a.repeat << "\n";
  os << "d3_end_to_end_median_s," << fmt(median(d3_total), 9) << "\n";
  os << "d3_network_median_s," << fmt(median(d3_net), 9) << "\n";
  os << "baseline_end_to_end_median_s," << fmt(median(base_total), 9) << "\n";
  os << "baseline_network_median_s," << fmt(median(base_net), 9) << "\n";
  os << "speedup_end_to_end," << fmt(median(base_total) / median(d3_total), 3) << "\n";
  os << "speedup_network," << fmt(median(base_net) / median(d3_net), 3) << "\n";
  os << "multiplies_per_patch_counted," << counts.actual() << "\n";
  os << "multiplies_per_patch_fast_transform," << counts.theoretical() << "\n";
  os << "multiplies_per_patch_formula," << theory.multiplies << "\n";
  std::cout << os.str();
  if (!a.out.empty()) {
    write_file(a.out, os.str());
    return with_suffix(a.out, ".manifest");
  }
  return "bench.manifest";
}

struct ComplexityArgs {
  std::string d3, conv;
};

/// "arcnn", "arcnn:M", or "n0,...,nd/s1,...,sd/m1,...,md" (a single m applies to every layer).
complexity::ConvArchSpec parse_conv(const std::string& text) {
  if (text == "arcnn") return complexity::arcnn_spec();
  if (text.rfind("arcnn:", 0) == 0) return complexity::arcnn_spec(parse_list<std::uint64_t>(text.substr(6), "size")[0]);
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, '/')) parts.push_back(part);
  if (parts.size() != 3) throw ValidationError("--conv expects filters/kernels/sizes, got '" + text + "'");
  complexity::ConvArchSpec spec{parse_list<std::uint64_t>(parts[0], "filter"),
                                parse_list<std::uint64_t>(parts[1], "kernel"),
                                parse_list<std::uint64_t>(parts[2], "size")};
  if (spec.output_size.size() == 1) spec.output_size.assign(spec.kernel.size(), spec.output_size[0]);
  return spec;
}

fs::path run_complexity(const ComplexityArgs& a) {
  if (a.d3.empty() == a.conv.empty()) throw ValidationError("give exactly one of --d3 or --conv");
  complexity::Cost c;
  if (!a.d3.empty()) {
    const auto v = parse_list<std::uint64_t>(a.d3, "dimension");
    if (v.size() != 3) throw ValidationError("--d3 expects p_phi,p_psi,m");
    c = complexity::d3_complexity(v[0], v[1], v[2]);
  } else {
    c = complexity::conv_complexity(parse_conv(a.conv));
  }
  std::cout << "multiplies " << group_thousands(c.multiplies) << "\n";
  std::cout << "params " << group_thousands(c.params) << "\n";
  return "complexity.manifest";
}

/// Every option of `sub` after defaults, keyed by long name.
std::map<std::string, std::string> resolved_options(const CLI::App& sub) {
  std::map<std::string, std::string> out;
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name.empty()) continue;
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
      if (opt->get_type_size() == 0) value = "true";
    } else {
      value = opt->get_type_size() == 0 ? "false" : opt->get_default_str();
    }
    out[name] = value;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"D3 JPEG artifact restoration"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  std::string manifest_path;
  app.add_option("--manifest", manifest_path, "Where to write the run manifest");

  CodecArgs codec;
  auto* c = app.add_subcommand("codec", "JPEG-degrade every image at a quality factor");
  c->add_option("--in", codec.in, "Image or directory")->required();
  c->add_option("--out", codec.out, "Output directory")->required();
  c->add_option("--quality", codec.quality, "Quality factor 1..100")->required();

  DictArgs dict;
  auto* d = app.add_subcommand("train-dicts", "Learn DCT and pixel dictionaries");
  d->add_option("--data", dict.data, "Training images")->required();
  d->add_option("--out", dict.out, "Dictionary checkpoint")->required();
  d->add_option("--quality", dict.quality, "Quality factor");
  d->add_option("--atoms", dict.atoms, "Atoms per dictionary");
  d->add_option("--sparsity", dict.sparsity, "l1 weight");
  d->add_option("--rounds", dict.rounds, "Alternating rounds");
  d->add_option("--seed", dict.seed, "Random seed");
  d->add_option("--patches", dict.patches, "Training patches");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a D3 or D-Base model");
  t->add_option("--data", train.data, "Training images")->required();
  t->add_option("--out", train.out, "Model checkpoint")->required();
  t->add_option("--quality", train.quality, "Quality factor, or a decreasing chain such as 20,10");
  t->add_option("--p-phi", train.p_phi, "DCT-domain atoms");
  t->add_option("--p-psi", train.p_psi, "Pixel-domain atoms");
  t->add_option("--init", train.init, "sparse | random | checkpoint:PATH");
  t->add_option("--lr", train.lr, "Learning rate");
  t->add_option("--batch", train.batch, "Batch size");
  t->add_option("--momentum", train.momentum, "SGD momentum");
  t->add_option("--epochs", train.epochs, "Epochs");
  t->add_option("--seed", train.seed, "Random seed");
  t->add_option("--arch", train.arch, "d3 | dbase");
  t->add_option("--patches", train.patches, "Training patches per quality");
  t->add_option("--dicts", train.dicts, "Dictionary checkpoint for --init sparse");
  t->add_option("--sparsity", train.sparsity, "l1 weight when learning dictionaries");
  t->add_option("--rounds", train.rounds, "Dictionary rounds when learning dictionaries");
  t->add_option("--sparse-scaling", train.scaling, "lipschitz | unit");
  t->add_option("--val-fraction", train.val_fraction, "Held-out share of training patches");
  t->add_option("--patience", train.patience, "Epochs without validation gain before stopping");
  t->add_option("--box-weight", train.box_weight, "Weight of the interval loss");

  RestoreArgs restore;
  auto* r = app.add_subcommand("restore", "Restore degraded images");
  r->add_option("--model", restore.model, "Checkpoint (d3, dbase or dictionaries)")->required();
  r->add_option("--in", restore.in, "Degraded image or directory")->required();
  r->add_option("--out", restore.out, "Output image or directory")->required();
  r->add_option("--stride", restore.stride, "Patch stride");
  r->add_option("--project", restore.project, "on | off | exact");
  r->add_option("--iters", restore.iters, "Iterations for the dictionary baseline");
  r->add_option("--ref", restore.ref, "Clean reference for PSNR output");
  r->add_option("--costs", restore.costs, "Write per-image restore time and multiply counts (CSV)");
  r->add_flag("--quantize-output", restore.quantize_output, "Round restored pixels before measuring");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Score test images against references");
  e->add_option("--ref", eval.ref, "Reference directory")->required();
  e->add_option("--test", eval.test, "Test directory")->required();
  e->add_option("--metrics", eval.metrics, "Comma list of psnr, ssim, psnrb");
  e->add_option("--out", eval.out, "CSV report")->required();
  e->add_option("--markdown", eval.markdown, "Markdown report (default: CSV path with .md)");
  e->add_option("--costs", eval.costs, "Cost table from restore --costs, adds restore_ms and multiplies columns");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Time D3 against the iterative dual-domain baseline");
  b->add_option("--model", bench.model, "D3 checkpoint")->required();
  b->add_option("--image", bench.image, "Degraded image")->required();
  b->add_option("--repeat", bench.repeat, "Runs per method");
  b->add_option("--stride", bench.stride, "Patch stride");
  b->add_option("--project", bench.project, "on | off | exact");
  b->add_option("--iters", bench.iters, "Baseline iterations");
  b->add_option("--dicts", bench.dicts, "Baseline dictionaries (default: from the model)");
  b->add_option("--sparsity", bench.sparsity, "Baseline l1 weight when using model dictionaries");
  b->add_option("--out", bench.out, "CSV output");

  ComplexityArgs cx;
  auto* x = app.add_subcommand("complexity", "Multiplication and parameter counts");
  x->add_option("--d3", cx.d3, "p_phi,p_psi,m");
  x->add_option("--conv", cx.conv, "arcnn[:M] or filters/kernels/sizes");

  const std::string started = utc_timestamp();
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::cerr << "error: " << ex.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    fs::path default_manifest;
    if (sub == c) default_manifest = run_codec(codec);
    else if (sub == d) default_manifest = run_train_dicts(dict);
    else if (sub == t) default_manifest = run_train(train);
    else if (sub == r) default_manifest = run_restore(restore);
    else if (sub == e) default_manifest = run_eval(eval);
    else if (sub == b) default_manifest = run_bench(bench);
    else default_manifest = run_complexity(cx);

    RunManifest m;
    m.command = sub->get_name();
    m.config = resolved_options(*sub);
    m.started = started;
    m.finished = utc_timestamp();
    write_manifest(m, manifest_path.empty() ? default_manifest : fs::path(manifest_path));
    return 0;
  } catch (const ValidationError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  } catch (const IoError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
}
