#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "funcarea/errors.hpp"
#include "funcarea/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace funcarea;
using nlohmann::ordered_json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

std::vector<Strategy> preset_of(const std::string& name) { return strategy_preset(name); }

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + path.string());
    return out;
}

// Sidecar recording how an output was produced.
void write_run_record(const fs::path& output, const std::string& command, std::uint64_t seed, ordered_json options) {
    ordered_json rec;
    rec["command"] = command;
    rec["seed"] = seed;
    rec["options"] = std::move(options);
    fs::path side = output;
    if (fs::is_directory(output)) side /= "run.json";
    else side += ".run.json";
    open_out(side) << rec.dump(2) << '\n';
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

DetectorConfig detector_config(const std::string& preset, double cutoff, double nms_threshold, std::uint64_t seed) {
    DetectorConfig cfg;
    cfg.strategies = preset_of(preset);
    cfg.confidence_cutoff = cutoff;
    cfg.apply_nms = nms_threshold > 0.0;
    if (cfg.apply_nms) cfg.nms_threshold = nms_threshold;
    cfg.seed = seed;
    return cfg;
}

// Image list from positional paths or from an annotation file.
struct ImageList {
    std::vector<std::string> refs;
    std::vector<fs::path> paths;
};

ImageList collect_images(const std::vector<std::string>& images, const std::string& annotations) {
    ImageList list;
    if (!annotations.empty()) {
        const SyntheticDataset data = load_dataset(annotations);
        const fs::path base = fs::path(annotations).parent_path();
        for (const std::string& ref : data.image_refs) {
            list.refs.push_back(ref);
            list.paths.push_back(fs::path(ref).is_absolute() ? fs::path(ref) : base / ref);
        }
    }
    for (const std::string& img : images) {
        list.refs.push_back(img);
        list.paths.emplace_back(img);
    }
    return list;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Functional area detection toolkit"};
    app.require_subcommand(1);
    std::uint64_t seed = 1;
    app.add_option("--seed", seed, "Seed for every random choice")->capture_default_str();

    // segment
    auto* seg = app.add_subcommand("segment", "Over-segment an image");
    std::string seg_in, seg_out, seg_color = "rgb";
    double seg_k = 100.0, seg_sigma = 0.8;
    std::size_t seg_min = 0;
    seg->add_option("image", seg_in)->required()->check(CLI::ExistingFile);
    seg->add_option("-o,--out", seg_out, "Label image (PPM); a .txt sidecar is written next to it")->required();
    seg->add_option("--k", seg_k)->capture_default_str()->check(CLI::PositiveNumber);
    seg->add_option("--sigma", seg_sigma)->capture_default_str()->check(CLI::NonNegativeNumber);
    seg->add_option("--min-size", seg_min, "0 means floor(max(h,w)/100)")->capture_default_str();
    seg->add_option("--color", seg_color)->capture_default_str()->check(CLI::IsMember({"rgb", "hsv", "intensity"}));

    // propose
    auto* prop = app.add_subcommand("propose", "Selective-search region proposals");
    std::string prop_in, prop_out, prop_preset = "fast", prop_overlay;
    long long prop_min_area = 0;
    std::size_t prop_overlay_count = 20;
    prop->add_option("image", prop_in)->required()->check(CLI::ExistingFile);
    prop->add_option("-o,--out", prop_out, "Box list, one `x_min y_min x_max y_max` per line")->required();
    prop->add_option("--preset", prop_preset)->capture_default_str()->check(CLI::IsMember({"fast", "quality"}));
    prop->add_option("--min-area", prop_min_area)->capture_default_str();
    prop->add_option("--overlay", prop_overlay, "Also render the first proposals onto a PPM");
    prop->add_option("--overlay-count", prop_overlay_count)->capture_default_str();

    // detect
    auto* det = app.add_subcommand("detect", "Run the detector on images");
    std::string det_ckpt, det_out, det_preset = "fast", det_ann;
    std::vector<std::string> det_images;
    double det_cutoff = 0.0, det_nms = 0.0;
    det->add_option("images", det_images)->check(CLI::ExistingFile);
    det->add_option("--annotations", det_ann, "Run on every image of an annotation file")->check(CLI::ExistingFile);
    det->add_option("-c,--checkpoint", det_ckpt)->required()->check(CLI::ExistingFile);
    det->add_option("-o,--out", det_out, "Detections file")->required();
    det->add_option("--preset", det_preset)->capture_default_str()->check(CLI::IsMember({"fast", "quality"}));
    det->add_option("--cutoff", det_cutoff, "Minimum confidence")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    det->add_option("--nms", det_nms, "NMS IOU threshold; 0 disables")->capture_default_str()->check(CLI::Range(0.0, 1.0));

    // train
    auto* tr = app.add_subcommand("train", "Multi-round training with hard example mining");
    std::string tr_cfg, tr_data, tr_out, tr_preset = "fast";
    std::size_t tr_backgrounds = 100;
    double tr_nms = 0.3;
    tr->add_option("config", tr_cfg)->required()->check(CLI::ExistingFile);
    tr->add_option("--data", tr_data, "Annotation file")->required()->check(CLI::ExistingFile);
    tr->add_option("-o,--out", tr_out, "Output directory")->required();
    tr->add_option("--preset", tr_preset, "Proposal preset used for mining")->capture_default_str()->check(CLI::IsMember({"fast", "quality"}));
    tr->add_option("--backgrounds", tr_backgrounds, "Background samples per image")->capture_default_str();
    tr->add_option("--nms", tr_nms, "NMS threshold of the mining detector; 0 disables")->capture_default_str()->check(CLI::Range(0.0, 1.0));

    // mine
    auto* mine = app.add_subcommand("mine", "List hard examples of a checkpoint");
    std::string mine_ckpt, mine_data, mine_out, mine_preset = "fast";
    double mine_nms = 0.3;
    mine->add_option("-c,--checkpoint", mine_ckpt)->required()->check(CLI::ExistingFile);
    mine->add_option("--data", mine_data)->required()->check(CLI::ExistingFile);
    mine->add_option("-o,--out", mine_out, "`image x_min y_min x_max y_max label` per line")->required();
    mine->add_option("--preset", mine_preset)->capture_default_str()->check(CLI::IsMember({"fast", "quality"}));
    mine->add_option("--nms", mine_nms)->capture_default_str()->check(CLI::Range(0.0, 1.0));

    // eval
    auto* ev = app.add_subcommand("eval", "Score detections against annotations");
    std::string ev_det, ev_ann, ev_out;
    double ev_iou = 0.5, ev_conf = 0.0;
    ev->add_option("--detections", ev_det)->required()->check(CLI::ExistingFile);
    ev->add_option("--annotations", ev_ann)->required()->check(CLI::ExistingFile);
    ev->add_option("-o,--out", ev_out, "Output prefix: <prefix>.txt, <prefix>.csv, <prefix>_roc.csv")->required();
    ev->add_option("--iou", ev_iou)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    ev->add_option("--min-confidence", ev_conf)->capture_default_str()->check(CLI::Range(0.0, 1.0));

    // synth
    auto* syn = app.add_subcommand("synth", "Generate a synthetic dataset");
    std::string syn_out;
    std::size_t syn_count = 20;
    SyntheticSceneSpec syn_spec;
    syn->add_option("-o,--out", syn_out, "Output directory")->required();
    syn->add_option("-n,--count", syn_count)->capture_default_str();
    syn->add_option("--width", syn_spec.width)->capture_default_str();
    syn->add_option("--height", syn_spec.height)->capture_default_str();
    syn->add_option("--min-objects", syn_spec.min_objects)->capture_default_str();
    syn->add_option("--max-objects", syn_spec.max_objects)->capture_default_str();

    // render
    auto* ren = app.add_subcommand("render", "Draw detections onto an image");
    std::string ren_in, ren_det, ren_out, ren_ref;
    double ren_conf = 0.0;
    ren->add_option("image", ren_in)->required()->check(CLI::ExistingFile);
    ren->add_option("--detections", ren_det)->required()->check(CLI::ExistingFile);
    ren->add_option("-o,--out", ren_out)->required();
    ren->add_option("--ref", ren_ref, "Image reference in the detections file (default: the image path)");
    ren->add_option("--min-confidence", ren_conf)->capture_default_str();

    // damping
    auto* damp = app.add_subcommand("damping", "Momentum trajectories on a 1-D quadratic");
    std::string damp_out;
    std::vector<std::string> damp_pairs{"0.1:0.0", "0.1:0.5", "0.1:0.9", "0.5:0.9", "1.9:0.0"};
    double damp_curv = 1.0, damp_theta0 = 1.0;
    int damp_steps = 100;
    damp->add_option("-o,--out", damp_out, "CSV: lr,momentum,step,theta")->required();
    damp->add_option("--pairs", damp_pairs, "lr:momentum pairs")->capture_default_str();
    damp->add_option("--curvature", damp_curv)->capture_default_str()->check(CLI::PositiveNumber);
    damp->add_option("--steps", damp_steps)->capture_default_str()->check(CLI::PositiveNumber);
    damp->add_option("--theta0", damp_theta0)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*seg) {
            const Image img = read_pnm(seg_in);
            OversegmentOptions opt;
            opt.k = seg_k;
            opt.sigma = seg_sigma;
            opt.min_size = seg_min > 0 ? seg_min : default_min_segment_size(img.width(), img.height());
            const SegmentMap s = oversegment(convert_color(img, color_space_from_string(seg_color)), opt);
            fs::path sidecar = seg_out;
            sidecar.replace_extension(".txt");
            if (fs::path(seg_out).has_parent_path()) fs::create_directories(fs::path(seg_out).parent_path());
            write_segment_map(seg_out, sidecar, s);
            write_run_record(seg_out, "segment", seed,
                             {{"image", seg_in}, {"k", seg_k}, {"sigma", seg_sigma}, {"min_size", opt.min_size}, {"color", seg_color}});
            std::cout << s.segment_count << " segments\n";
        } else if (*prop) {
            const Image img = read_pnm(prop_in);
            const ProposalSet p = propose(img, preset_of(prop_preset), seed, {0, prop_min_area});
            auto out = open_out(prop_out);
            for (const BoundingBox& b : p.boxes) out << b.x_min << ' ' << b.y_min << ' ' << b.x_max << ' ' << b.y_max << '\n';
            if (!prop_overlay.empty()) {
                std::vector<Detection> shown;
                for (std::size_t i = 0; i < std::min(prop_overlay_count, p.boxes.size()); ++i)
                    shown.push_back({p.boxes[i], static_cast<int>(i % kEndCategoryCount), 1.0});
                write_pnm(prop_overlay, render_overlay(img, shown));
            }
            write_run_record(prop_out, "propose", seed, {{"image", prop_in}, {"preset", prop_preset}, {"min_area", prop_min_area}});
            std::cout << p.boxes.size() << " proposals\n";
        } else if (*det) {
            const ImageList list = collect_images(det_images, det_ann);
            if (list.paths.empty()) throw CLI::RequiredError("images or --annotations");
            const Checkpoint model = load_checkpoint(det_ckpt);
            std::vector<DetectionRecord> records;
            for (std::size_t i = 0; i < list.paths.size(); ++i) {
                const DetectorConfig cfg = detector_config(det_preset, det_cutoff, det_nms, image_seed(seed, i));
                for (const Detection& d : detect(read_pnm(list.paths[i]), model, cfg)) records.push_back({list.refs[i], d});
            }
            auto out = open_out(det_out);
            write_detections(out, records);
            write_run_record(det_out, "detect", seed,
                             {{"checkpoint", det_ckpt}, {"images", list.refs}, {"preset", det_preset}, {"cutoff", det_cutoff}, {"nms", det_nms}});
            std::cout << records.size() << " detections\n";
        } else if (*tr) {
            RoundsConfig cfg;
            cfg.train = load_train_config(tr_cfg);
            if (app.get_option("--seed")->count() > 0) cfg.train.seed = seed;
            cfg.sampling.backgrounds_per_image = tr_backgrounds;
            cfg.sampling.seed = derive_seed(cfg.train.seed, {0x73616d70ULL});
            cfg.detector = detector_config(tr_preset, 0.0, tr_nms, cfg.train.seed);
            const SyntheticDataset data = load_dataset(tr_data);
            const DatasetSplit split = split_dataset(data.image_refs, cfg.train.seed);
            std::map<std::string, std::size_t> index;
            for (std::size_t i = 0; i < data.image_refs.size(); ++i) index.emplace(data.image_refs[i], i);
            auto indices = [&](const std::vector<std::string>& refs) {
                std::vector<std::size_t> out;
                for (const std::string& r : refs) out.push_back(index.at(r));
                return out;
            };
            fs::create_directories(tr_out);
            ProposalCache cache;
            const RoundsResult res = train_rounds(
                data, indices(split.train), indices(split.validation), cfg, &cache,
                [&](int round, const Checkpoint& model, const RoundReport& rep) {
                    const std::string stem = "round_" + std::to_string(round);
                    save_checkpoint(fs::path(tr_out) / (stem + ".fscn"), model);
                    write_epoch_csv(fs::path(tr_out) / (stem + ".csv"), rep);
                    std::cout << "round " << round << ": " << rep.training_set_size << " patches, loss "
                              << fmt_double(rep.final_loss) << ", validation top-1 error " << fmt_double(rep.top1_error)
                              << '\n';
                });
            auto split_out = open_out(fs::path(tr_out) / "split.txt");
            for (const auto& [name, refs] : {std::pair{"train", &split.train}, {"validation", &split.validation}, {"test", &split.test}})
                for (const std::string& r : *refs) split_out << name << ' ' << r << '\n';
            ordered_json opts{{"config", tr_cfg}, {"data", tr_data}, {"preset", tr_preset}, {"backgrounds", tr_backgrounds},
                              {"nms", tr_nms}, {"hard_examples", res.hard_examples}};
            write_run_record(tr_out, "train", cfg.train.seed, opts);
        } else if (*mine) {
            const Checkpoint model = load_checkpoint(mine_ckpt);
            const SyntheticDataset data = load_dataset(mine_data);
            std::vector<std::size_t> ids(data.images.size());
            std::iota(ids.begin(), ids.end(), std::size_t{0});
            const HardExampleSet hard =
                mine_hard_examples(data, ids, make_detector(model, detector_config(mine_preset, 0.0, mine_nms, seed)));
            auto out = open_out(mine_out);
            for (const HardExample& h : hard)
                out << data.image_refs[h.image_index] << ' ' << h.box.x_min << ' ' << h.box.y_min << ' ' << h.box.x_max << ' '
                    << h.box.y_max << ' ' << category_name(h.label) << '\n';
            write_run_record(mine_out, "mine", seed, {{"checkpoint", mine_ckpt}, {"data", mine_data}, {"preset", mine_preset}, {"nms", mine_nms}});
            std::cout << hard.size() << " hard examples\n";
        } else if (*ev) {
            const auto images = pair_by_image(load_detections(ev_det), load_annotations(ev_ann));
            const MetricsReport m = evaluate(images, ev_iou, ev_conf);
            const RocCurve roc = roc_curve(images, ev_iou);
            auto txt = open_out(ev_out + ".txt");
            txt << "images " << images.size() << "\ntrue_positives " << m.tp << "\nfalse_positives " << m.fp
                << "\nfalse_negatives " << m.fn << "\nprecision " << fmt_double(m.precision) << "\nrecall "
                << fmt_double(m.recall) << "\nf1 " << fmt_double(m.f1) << '\n';
            auto csv = open_out(ev_out + ".csv");
            csv << "iou,min_confidence,tp,fp,fn,precision,recall,f1\n"
                << fmt_double(ev_iou) << ',' << fmt_double(ev_conf) << ',' << m.tp << ',' << m.fp << ',' << m.fn << ','
                << fmt_double(m.precision) << ',' << fmt_double(m.recall) << ',' << fmt_double(m.f1) << '\n';
            auto roc_csv = open_out(ev_out + "_roc.csv");
            roc_csv << "threshold,false_positives_per_image,recall\n";
            for (const RocPoint& p : roc.points)
                roc_csv << fmt_double(p.threshold) << ',' << fmt_double(p.false_positives_per_image) << ','
                        << fmt_double(p.recall) << '\n';
            write_run_record(ev_out + ".txt", "eval", seed,
                             {{"detections", ev_det}, {"annotations", ev_ann}, {"iou", ev_iou}, {"min_confidence", ev_conf}});
            std::cout << "precision " << fmt_double(m.precision) << " recall " << fmt_double(m.recall) << " f1 "
                      << fmt_double(m.f1) << '\n';
        } else if (*syn) {
            syn_spec.seed = seed;
            const SyntheticDataset data = generate_synthetic(syn_spec, syn_count);
            save_dataset(syn_out, data);
            write_run_record(syn_out, "synth", seed,
                             {{"count", syn_count}, {"width", syn_spec.width}, {"height", syn_spec.height},
                              {"min_objects", syn_spec.min_objects}, {"max_objects", syn_spec.max_objects}});
            std::cout << data.images.size() << " images, " << data.annotations.size() << " annotations\n";
        } else if (*ren) {
            const Image img = read_pnm(ren_in);
            const std::string ref = ren_ref.empty() ? ren_in : ren_ref;
            std::vector<Detection> dets;
            for (const DetectionRecord& r : load_detections(ren_det))
                if (r.image_ref == ref && r.detection.confidence >= ren_conf) dets.push_back(r.detection);
            if (ren_out.find('/') != std::string::npos) fs::create_directories(fs::path(ren_out).parent_path());
            write_pnm(ren_out, render_overlay(img, dets));
            write_run_record(ren_out, "render", seed, {{"image", ren_in}, {"detections", ren_det}, {"ref", ref}});
            std::cout << dets.size() << " boxes drawn\n";
        } else if (*damp) {
            auto out = open_out(damp_out);
            out << "lr,momentum,spectral_radius,underdamped,step,theta\n";
            for (const std::string& pair : damp_pairs) {
                const auto colon = pair.find(':');
                if (colon == std::string::npos) throw CLI::ValidationError("--pairs", "expected lr:momentum, got " + pair);
                DampingProbe probe;
                probe.curvature = damp_curv;
                probe.steps = damp_steps;
                probe.theta0 = damp_theta0;
                try {
                    probe.lr = std::stod(pair.substr(0, colon));
                    probe.momentum = std::stod(pair.substr(colon + 1));
                } catch (const std::exception&) {
                    throw CLI::ValidationError("--pairs", "expected lr:momentum, got " + pair);
                }
                const double rho = spectral_radius(probe);
                const bool under = underdamped(probe);
                const auto traj = simulate_quadratic(probe);
                for (std::size_t t = 0; t < traj.size(); ++t)
                    out << fmt_double(probe.lr) << ',' << fmt_double(probe.momentum) << ',' << fmt_double(rho) << ','
                        << (under ? 1 : 0) << ',' << t << ',' << fmt_double(traj[t]) << '\n';
            }
            write_run_record(damp_out, "damping", seed,
                             {{"pairs", damp_pairs}, {"curvature", damp_curv}, {"steps", damp_steps}, {"theta0", damp_theta0}});
        }
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return 0;
}
