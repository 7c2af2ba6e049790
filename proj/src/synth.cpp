#include "vecfold/synth.hpp"

#include <cstdio>
#include <fstream>
#include <string>

#include "vecfold/error.hpp"
#include "vecfold/random.hpp"

namespace vecfold::synth {

namespace {

using Vocab = std::vector<std::string_view>;

const std::array<Vocab, 4>& vocabularies() {
    static const std::array<Vocab, 4> v = {{
        {"tire", "tires", "rim", "rims", "wheel", "wheels", "tread", "michelin", "goodyear", "bridgestone",
         "all-season", "winter", "studded", "lug", "nuts", "225/45r17", "265/70r16", "spare", "alloy", "hubcap",
         "bfgoodrich", "mud", "terrain", "firestone", "pirelli", "balance", "tpms", "offroad"},
        {"headlight", "headlights", "taillight", "taillights", "led", "hid", "xenon", "bulb", "bulbs", "lamp",
         "fog", "lights", "lens", "housing", "projector", "halo", "beam", "turn", "signal", "ballast",
         "brake", "light", "bar", "drl", "assembly", "amber", "smoked", "clear"},
        {"seat", "seats", "leather", "cloth", "bucket", "bench", "recliner", "headrest", "upholstery", "cushion",
         "covers", "cover", "heated", "power", "lumbar", "third", "row", "captain", "chairs", "console",
         "armrest", "stitching", "vinyl", "bracket", "rail", "seatbelt", "child", "booster"},
        {"bumper", "fender", "hood", "door", "doors", "quarter", "panel", "panels", "grille", "trunk",
         "lid", "tailgate", "mirror", "spoiler", "primer", "paint", "painted", "dent", "rocker", "skirt",
         "valance", "cowl", "bedside", "oem", "aftermarket", "body", "molding", "liftgate"},
    }};
    return v;
}

const Vocab& filler() {
    static const Vocab v = {"used",  "good",   "condition", "pickup", "only",  "cash", "obo",     "price", "firm",
                            "call",  "text",   "ford",      "chevy",  "honda", "toyota", "nissan", "dodge", "jeep",
                            "2012",  "2015",   "2018",      "great",  "shape", "fits", "local",   "today", "works"};
    return v;
}

std::string_view pick(const Vocab& v, Rng& rng) { return v[rng.uniform_index(v.size())]; }

} // namespace

std::vector<LabeledPost> synthetic_corpus(std::size_t n_posts, std::uint64_t seed) {
    Rng rng(seed);
    const auto& vocab = vocabularies();
    std::vector<LabeledPost> out;
    out.reserve(n_posts);
    for (std::size_t i = 0; i < n_posts; ++i) {
        LabeledPost lp;
        lp.category = i % categories.size();
        const auto& words = vocab[lp.category];
        auto& post = lp.post;

        char id[32];
        std::snprintf(id, sizeof(id), "syn-%05zu", i);
        post.id = id;
        post.platform = rng.uniform01() < 0.5 ? corpus::Platform::offerup : corpus::Platform::craigslist;

        const std::size_t title_words = 2 + rng.uniform_index(3);
        for (std::size_t w = 0; w < title_words; ++w) {
            if (!post.title.empty()) post.title += ' ';
            post.title += pick(words, rng);
        }
        const std::size_t body_words = 10 + rng.uniform_index(11);
        for (std::size_t w = 0; w < body_words; ++w) {
            if (!post.body.empty()) post.body += ' ';
            post.body += rng.uniform01() < 0.6 ? pick(words, rng) : pick(filler(), rng);
        }

        const std::size_t images = rng.uniform_index(6);
        for (std::size_t m = 0; m < images; ++m) {
            char name[48];
            std::snprintf(name, sizeof(name), "images/%s/%zu.jpg", id, m);
            post.images.emplace_back(name);
        }
        post.price = static_cast<double>(10 + rng.uniform_index(990));
        out.push_back(std::move(lp));
    }
    return out;
}

void write_synthetic_corpus(const std::filesystem::path& path, const std::vector<LabeledPost>& posts) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(Errc::UnwritablePath, "cannot write " + path.string());
    }
    for (const auto& lp : posts) {
        auto j = corpus::post_to_json(lp.post);
        j["category"] = categories[lp.category];
        out << j.dump() << '\n';
    }
}

} // namespace vecfold::synth
