#include "saaf/error.hpp"
#include "saaf/facade_data.hpp"
#include "saaf/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitModel = 4;

std::vector<saaf::FacadeStyle> parse_styles(const std::string& csv) {
    std::vector<saaf::FacadeStyle> styles;
    std::stringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) {
        styles.push_back(saaf::parse_style(item));
    }
    if (styles.empty()) {
        throw saaf::Error(saaf::ErrorKind::MalformedRecord, "--styles needs at least one style");
    }
    return styles;
}

// Checkpoints are model artifacts, so every failure reading one is a model error.
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

saaf::Checkpoint open_checkpoint(const std::string& path) {
    try {
        return saaf::load_checkpoint(path);
    } catch (const saaf::Error& e) {
        throw CheckpointError(path + ": " + e.what());
    }
}

void print_check_table(const saaf::CheckReport& report) {
    std::printf("%-36s %6s %14s\n", "parameter", "coords", "max_rel_error");
    for (const auto& p : report.params) {
        std::printf("%-36s %6ld %14.3e\n", p.name.c_str(), static_cast<long>(p.coordinates), p.max_rel_error);
    }
    std::printf("tol %.1e: %s\n", report.tol, report.passed ? "PASS" : "FAIL");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Referring facade segmentation with an embedding-as-mask head"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "Render a synthetic facade dataset");
    std::string gen_out;
    saaf::GenerateOptions gen_opts;
    std::string styles_csv = "photo";
    gen->add_option("--out", gen_out, "Dataset directory")->required();
    gen->add_option("--count", gen_opts.count, "Number of facades")->capture_default_str();
    gen->add_option("--seed", gen_opts.seed, "Generator seed")->capture_default_str();
    gen->add_option("--size", gen_opts.size, "Image side in pixels")->capture_default_str();
    gen->add_option("--max-rows", gen_opts.max_rows, "Largest window row count (1..4)")->capture_default_str();
    gen->add_option("--max-cols", gen_opts.max_cols, "Largest window column count (1..5)")->capture_default_str();
    gen->add_option("--styles", styles_csv, "Comma-separated: photo,line_drawing,noisy_photo")->capture_default_str();

    auto* tr = app.add_subcommand("train", "Fine-tune the trainable set and write a checkpoint");
    std::string tr_config, tr_data, tr_out;
    tr->add_option("--config", tr_config, "key = value config file")->required();
    tr->add_option("--data", tr_data, "Dataset directory (overrides the config's data key)");
    tr->add_option("--out", tr_out, "Checkpoint path (overrides checkpoint_out)");

    auto* ev = app.add_subcommand("eval", "Score a checkpoint on a dataset split");
    std::string ev_ckpt, ev_data, ev_split = "test", ev_dump;
    saaf::EvalOptions ev_opts;
    ev->add_option("--ckpt", ev_ckpt, "Checkpoint")->required();
    ev->add_option("--data", ev_data, "Dataset directory")->required();
    ev->add_option("--split", ev_split, "train, val or test")
        ->check(CLI::IsMember({"train", "val", "test"}))
        ->capture_default_str();
    ev->add_option("--threshold", ev_opts.threshold, "Mask probability threshold")->capture_default_str();
    ev->add_flag("--free-decode", ev_opts.free_decode, "Locate <SEG> by greedy decoding");
    ev->add_option("--dump", ev_dump, "Write predicted masks here");

    auto* sg = app.add_subcommand("segment", "Segment one image from a text description");
    std::string sg_ckpt, sg_image, sg_text, sg_out;
    bool sg_force = false;
    double sg_threshold = 0.5;
    sg->add_option("--ckpt", sg_ckpt, "Checkpoint")->required();
    sg->add_option("--image", sg_image, "Binary PPM image")->required();
    sg->add_option("--text", sg_text, "Description of the target region")->required();
    sg->add_option("--out", sg_out, "Output PGM mask")->required();
    sg->add_flag("--force-seg", sg_force, "Append <SEG> when the answer lacks one");
    sg->add_option("--threshold", sg_threshold, "Mask probability threshold")->capture_default_str();

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the joint loss on the toy model");
    saaf::GradcheckOptions gc_opts;
    gc->add_option("--seed", gc_opts.seed, "Model and sample seed")->capture_default_str();
    gc->add_option("--tol", gc_opts.tol, "Relative error tolerance")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e, std::cerr, std::cerr);
        std::cerr << app.help();
        return kExitUsage;
    }

    try {
        if (gen->parsed()) {
            try {
                gen_opts.styles = parse_styles(styles_csv);
            } catch (const saaf::Error& e) {
                std::cerr << "gen-data: " << e.what() << "\n";
                return kExitUsage;
            }
            const auto manifest = saaf::generate_dataset(gen_out, gen_opts);
            std::printf("wrote %zu samples to %s (train %zu, val %zu, test %zu)\n", manifest.samples.size(),
                        gen_out.c_str(), manifest.count(saaf::Split::Train), manifest.count(saaf::Split::Val),
                        manifest.count(saaf::Split::Test));
        } else if (tr->parsed()) {
            saaf::TrainConfig config = saaf::load_config(tr_config);
            if (!tr_data.empty()) {
                config.data = tr_data;
            }
            if (!tr_out.empty()) {
                config.checkpoint_out = tr_out;
            }
            if (config.data.empty()) {
                std::cerr << "train: no dataset given (--data or config key 'data')\n";
                return kExitUsage;
            }
            const auto manifest = saaf::read_manifest(std::filesystem::path(config.data) / "manifest.jsonl");
            auto result = saaf::train(config, config.data, manifest, [&](const saaf::LossRecord& r) {
                std::puts(saaf::format_loss_record(r).c_str());
                if (r.step % config.log_every == 0) {
                    std::fflush(stdout);
                }
            });
            saaf::save_checkpoint(result.checkpoint, config.checkpoint_out);
            std::cerr << "checkpoint written to " << config.checkpoint_out << "\n";
        } else if (ev->parsed()) {
            const saaf::Split split = saaf::parse_split(ev_split);
            const auto ckpt = open_checkpoint(ev_ckpt);
            const auto manifest = saaf::read_manifest(std::filesystem::path(ev_data) / "manifest.jsonl");
            if (!ev_dump.empty()) {
                std::filesystem::create_directories(ev_dump);
                ev_opts.dump_dir = ev_dump;
            }
            const auto report = saaf::evaluate(ckpt, ev_data, manifest, split, ev_opts);
            std::fputs(saaf::format_report(report).c_str(), stdout);
        } else if (sg->parsed()) {
            const auto ckpt = open_checkpoint(sg_ckpt);
            const saaf::Image image = saaf::read_image(sg_image);
            const auto result = saaf::segment(ckpt.bundle, image, sg_text, sg_force, sg_threshold);
            saaf::write_mask(result.mask, sg_out);
            std::puts(result.answer.c_str());
        } else if (gc->parsed()) {
            const auto report = saaf::gradcheck(gc_opts);
            print_check_table(report);
            return report.passed ? kExitOk : kExitModel;
        }
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitModel;
    } catch (const saaf::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (e.kind() == saaf::ErrorKind::BadConfig) {
            return kExitUsage;
        }
        return saaf::is_data_error(e.kind()) ? kExitData : kExitModel;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitModel;
    }
    return kExitOk;
}
