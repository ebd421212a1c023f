#include <algorithm>
#include <cstdio>

#include "valr/data.hpp"
#include "valr/rng.hpp"

namespace valr {

const char* color_word(ObjColor c) {
    switch (c) {
        case ObjColor::Red: return "red";
        case ObjColor::Green: return "green";
        case ObjColor::Blue: return "blue";
        case ObjColor::Yellow: return "yellow";
    }
    fail("bad color");
}

const char* shape_word(ObjShape s) {
    switch (s) {
        case ObjShape::Square: return "square";
        case ObjShape::Disk: return "disk";
        case ObjShape::Triangle: return "triangle";
    }
    fail("bad shape");
}

const char* family_name(TaskFamily f) {
    switch (f) {
        case TaskFamily::Count: return "count";
        case TaskFamily::RelativePosition: return "relative_position";
        case TaskFamily::AppearanceOrder: return "appearance_order";
    }
    fail("bad family");
}

TaskFamily family_from_name(const std::string& s) {
    if (s == "count") return TaskFamily::Count;
    if (s == "relative_position") return TaskFamily::RelativePosition;
    if (s == "appearance_order") return TaskFamily::AppearanceOrder;
    fail("unknown task family: " + s);
}

// ---- rendering -------------------------------------------------------------

namespace {

constexpr int kCellPx = 4;
constexpr int kViewCells = 4;  // every view window is 4x4 cells -> 16x16 px

struct Rgb {
    double r, g, b;
};

Rgb palette(ObjColor c) {
    switch (c) {
        case ObjColor::Red: return {230 / 255.0, 30 / 255.0, 30 / 255.0};
        case ObjColor::Green: return {30 / 255.0, 200 / 255.0, 50 / 255.0};
        case ObjColor::Blue: return {40 / 255.0, 80 / 255.0, 230 / 255.0};
        case ObjColor::Yellow: return {235 / 255.0, 220 / 255.0, 40 / 255.0};
    }
    fail("bad color");
}

bool shape_pixel(ObjShape s, int y, int x) {
    switch (s) {
        case ObjShape::Square: return true;
        case ObjShape::Disk: return !((y == 0 || y == kCellPx - 1) && (x == 0 || x == kCellPx - 1));
        case ObjShape::Triangle: return x <= y;
    }
    return false;
}

}  // namespace

Image render_view(const SceneSpec& scene, int view_index, int image_id) {
    if (view_index < 0 || size_t(view_index) >= scene.views.size())
        fail("render_view: bad view index");
    const ViewWindow& win = scene.views[size_t(view_index)];
    const double bg = 20 / 255.0;
    Image img = Image::filled(kViewCells * kCellPx, bg, bg, bg, image_id);
    for (const auto& obj : scene.objects) {
        if (!win.contains(obj.cx, obj.cy)) continue;
        Rgb col = palette(obj.color);
        int bx = (obj.cx - win.x0) * kCellPx;
        int by = (obj.cy - win.y0) * kCellPx;
        for (int y = 0; y < kCellPx; ++y)
            for (int x = 0; x < kCellPx; ++x) {
                if (!shape_pixel(obj.shape, y, x)) continue;
                img.at(by + y, bx + x, 0) = col.r;
                img.at(by + y, bx + x, 1) = col.g;
                img.at(by + y, bx + x, 2) = col.b;
            }
    }
    return img;
}

// ---- generation --------------------------------------------------------------

namespace {

struct Descriptor {
    ObjColor color;
    ObjShape shape;
    bool operator==(const Descriptor& o) const { return color == o.color && shape == o.shape; }
    std::string words() const {
        return std::string(color_word(color)) + " " + shape_word(shape);
    }
};

std::vector<ViewWindow> tile_views(int q) {
    std::vector<ViewWindow> views;
    if (q == 1) {
        views.push_back({0, 0, kViewCells, kViewCells});
    } else if (q == 2 || q == 3) {
        for (int i = 0; i < q; ++i) views.push_back({i * kViewCells, 0, kViewCells, kViewCells});
    } else if (q == 4) {
        views.push_back({0, 0, kViewCells, kViewCells});
        views.push_back({kViewCells, 0, kViewCells, kViewCells});
        views.push_back({0, kViewCells, kViewCells, kViewCells});
        views.push_back({kViewCells, kViewCells, kViewCells, kViewCells});
    } else {
        fail("tile_views: unsupported view count");
    }
    return views;
}

SceneSpec empty_scene(int q, uint64_t seed) {
    SceneSpec s;
    s.views = tile_views(q);
    s.grid_w = 0;
    s.grid_h = 0;
    for (const auto& v : s.views) {
        s.grid_w = std::max(s.grid_w, v.x0 + v.w);
        s.grid_h = std::max(s.grid_h, v.y0 + v.h);
    }
    s.seed = seed;
    return s;
}

std::vector<std::pair<int, int>> shuffled_cells(const SceneSpec& s, Rng& rng) {
    std::vector<std::pair<int, int>> cells;
    for (int y = 0; y < s.grid_h; ++y)
        for (int x = 0; x < s.grid_w; ++x) cells.emplace_back(x, y);
    for (size_t i = cells.size(); i > 1; --i)
        std::swap(cells[i - 1], cells[size_t(rng.uniform_int(0, int64_t(i) - 1))]);
    return cells;
}

Descriptor random_descriptor(Rng& rng) {
    return {ObjColor(rng.uniform_int(0, 3)), ObjShape(rng.uniform_int(0, 2))};
}

bool matches(const SceneObject& o, int color, int shape) {
    if (color >= 0 && int(o.color) != color) return false;
    if (shape >= 0 && int(o.shape) != shape) return false;
    return true;
}


GeneratedSample make_count(Rng& rng, int q) {
    GeneratedSample g;
    g.family = TaskFamily::Count;
    g.scene = empty_scene(q, rng.seed());
    auto cells = shuffled_cells(g.scene, rng);

    int n_obj = int(rng.uniform_int(2, 8));
    for (int i = 0; i < n_obj; ++i) {
        auto d = random_descriptor(rng);
        g.scene.objects.push_back({cells[size_t(i)].first, cells[size_t(i)].second, d.color, d.shape});
    }

    int kind = int(rng.uniform_int(0, 2));  // 0 color+shape, 1 color, 2 shape
    g.query.family = TaskFamily::Count;
    auto d = random_descriptor(rng);
    g.query.color = kind == 2 ? -1 : int(d.color);
    g.query.shape = kind == 1 ? -1 : int(d.shape);

    std::string what;
    if (g.query.color >= 0) what += std::string(color_word(ObjColor(g.query.color))) + " ";
    if (g.query.shape >= 0) what += std::string(shape_word(ObjShape(g.query.shape))) + " ";
    g.sample.question = "how many " + what + "objects are there";

    int total = 0;
    for (int v = 0; v < q; ++v) {
        int c = 0;
        for (const auto& o : g.scene.objects)
            if (g.scene.views[size_t(v)].contains(o.cx, o.cy) &&
                matches(o, g.query.color, g.query.shape))
                ++c;
        total += c;
        g.sample.steps.push_back(
            {"view " + std::to_string(v) + " shows " + std::to_string(c) + " matching objects",
             kUnassignedTarget});
        g.true_targets.push_back(v);
    }
    g.sample.steps.push_back(
        {"in total there are " + std::to_string(total) + " matching objects", kUnassignedTarget});
    g.true_targets.push_back(0);
    g.sample.answer = std::to_string(total);
    return g;
}

GeneratedSample make_relative_position(Rng& rng, int q) {
    GeneratedSample g;
    g.family = TaskFamily::RelativePosition;
    g.scene = empty_scene(q, rng.seed());
    auto cells = shuffled_cells(g.scene, rng);

    Descriptor da = random_descriptor(rng);
    Descriptor db = random_descriptor(rng);
    while (db == da) db = random_descriptor(rng);
    SceneObject a{cells[0].first, cells[0].second, da.color, da.shape};
    SceneObject b{cells[1].first, cells[1].second, db.color, db.shape};
    g.scene.objects.push_back(a);
    g.scene.objects.push_back(b);
    int n_extra = int(rng.uniform_int(1, 4));
    for (int i = 0; i < n_extra; ++i) {
        Descriptor d = random_descriptor(rng);
        while (d == da || d == db) d = random_descriptor(rng);
        g.scene.objects.push_back({cells[size_t(2 + i)].first, cells[size_t(2 + i)].second, d.color,
                                   d.shape});
    }

    // pick an axis where the two coordinates actually differ
    std::vector<int> axes;
    if (a.cx != b.cx) axes.push_back(0);
    if (a.cy != b.cy) axes.push_back(1);
    int axis = axes[size_t(rng.uniform_int(0, int64_t(axes.size()) - 1))];
    int rel;
    if (axis == 0)
        rel = rng.uniform_int(0, 1) == 0 ? 0 : 1;  // left / right
    else
        rel = rng.uniform_int(0, 1) == 0 ? 2 : 3;  // above / below
    g.query.family = TaskFamily::RelativePosition;
    g.query.color_a = int(da.color);
    g.query.shape_a = int(da.shape);
    g.query.color_b = int(db.color);
    g.query.shape_b = int(db.shape);
    g.query.relation = rel;

    static const char* kRel[] = {"left of", "right of", "above", "below"};
    g.sample.question = "is the " + da.words() + " " + kRel[rel] + " the " + db.words();

    for (int v = 0; v < q; ++v) {
        bool ha = g.scene.views[size_t(v)].contains(a.cx, a.cy);
        bool hb = g.scene.views[size_t(v)].contains(b.cx, b.cy);
        std::string text = "view " + std::to_string(v);
        if (ha && hb)
            text += " shows the " + da.words() + " at column " + std::to_string(a.cx) + " row " +
                    std::to_string(a.cy) + " and the " + db.words() + " at column " +
                    std::to_string(b.cx) + " row " + std::to_string(b.cy);
        else if (ha)
            text += " shows the " + da.words() + " at column " + std::to_string(a.cx) + " row " +
                    std::to_string(a.cy);
        else if (hb)
            text += " shows the " + db.words() + " at column " + std::to_string(b.cx) + " row " +
                    std::to_string(b.cy);
        else
            text += " shows neither object";
        g.sample.steps.push_back({text, kUnassignedTarget});
        g.true_targets.push_back(v);
    }
    bool truth;
    switch (rel) {
        case 0: truth = a.cx < b.cx; break;
        case 1: truth = a.cx > b.cx; break;
        case 2: truth = a.cy < b.cy; break;
        default: truth = a.cy > b.cy; break;
    }
    std::string agg;
    if (axis == 0)
        agg = "the " + da.words() + " is at column " + std::to_string(a.cx) + " and the " +
              db.words() + " is at column " + std::to_string(b.cx);
    else
        agg = "the " + da.words() + " is at row " + std::to_string(a.cy) + " and the " + db.words() +
              " is at row " + std::to_string(b.cy);
    g.sample.steps.push_back({agg, kUnassignedTarget});
    g.true_targets.push_back(0);
    g.sample.answer = truth ? "yes" : "no";
    return g;
}

GeneratedSample make_appearance_order(Rng& rng, int q) {
    GeneratedSample g;
    g.family = TaskFamily::AppearanceOrder;
    g.scene = empty_scene(q, rng.seed());
    auto cells = shuffled_cells(g.scene, rng);

    Descriptor da = random_descriptor(rng);
    Descriptor db = random_descriptor(rng);
    while (db == da) db = random_descriptor(rng);

    // the two tracked objects live in different views
    int va = int(rng.uniform_int(0, q - 1));
    int vb = int(rng.uniform_int(0, q - 1));
    while (vb == va) vb = int(rng.uniform_int(0, q - 1));
    auto cell_in_view = [&](int v) {
        const ViewWindow& win = g.scene.views[size_t(v)];
        for (auto& c : cells) {
            if (!win.contains(c.first, c.second)) continue;
            bool taken = false;
            for (const auto& o : g.scene.objects)
                if (o.cx == c.first && o.cy == c.second) taken = true;
            if (!taken) return c;
        }
        fail("no free cell in view");
    };
    auto ca = cell_in_view(va);
    g.scene.objects.push_back({ca.first, ca.second, da.color, da.shape});
    auto cb = cell_in_view(vb);
    g.scene.objects.push_back({cb.first, cb.second, db.color, db.shape});
    int n_extra = int(rng.uniform_int(0, 3));
    for (int i = 0; i < n_extra; ++i) {
        Descriptor d = random_descriptor(rng);
        while (d == da || d == db) d = random_descriptor(rng);
        auto c = cell_in_view(int(rng.uniform_int(0, q - 1)));
        g.scene.objects.push_back({c.first, c.second, d.color, d.shape});
    }

    g.query.family = TaskFamily::AppearanceOrder;
    g.query.color_a = int(da.color);
    g.query.shape_a = int(da.shape);
    g.query.color_b = int(db.color);
    g.query.shape_b = int(db.shape);
    g.sample.question =
        "which appears first across the views the " + da.words() + " or the " + db.words();

    for (int v = 0; v < q; ++v) {
        bool ha = v == va, hb = v == vb;
        std::string text = "view " + std::to_string(v) + " contains ";
        if (ha && hb)
            text += "the " + da.words() + " and the " + db.words();
        else if (ha)
            text += "the " + da.words();
        else if (hb)
            text += "the " + db.words();
        else
            text += "neither object";
        g.sample.steps.push_back({text, kUnassignedTarget});
        g.true_targets.push_back(v);
    }
    const Descriptor& winner = va < vb ? da : db;
    const Descriptor& loser = va < vb ? db : da;
    g.sample.steps.push_back(
        {"the " + winner.words() + " appears before the " + loser.words(), kUnassignedTarget});
    g.true_targets.push_back(0);
    g.sample.answer = winner.words();
    return g;
}

}  // namespace

std::vector<GeneratedSample> generate_synthetic(int n, const GeneratorOptions& opt, uint64_t seed) {
    if (n < 1) fail("generate_synthetic: n must be >= 1");
    if (opt.families.empty()) fail("generate_synthetic: no families requested");
    std::vector<GeneratedSample> out;
    out.reserve(size_t(n));
    Rng root(seed);
    for (int i = 0; i < n; ++i) {
        Rng rng = root.split(uint64_t(i));
        TaskFamily fam = opt.families[size_t(i) % opt.families.size()];

        double roll = rng.u01();
        Regime regime = Regime::MultiView;
        if (roll < opt.p_single)
            regime = Regime::SingleView;
        else if (roll < opt.p_single + opt.p_interleaved)
            regime = Regime::Interleaved;
        // appearance order needs at least two views by construction
        if (fam == TaskFamily::AppearanceOrder && regime == Regime::SingleView)
            regime = Regime::MultiView;
        int q = regime == Regime::SingleView ? 1 : int(rng.uniform_int(2, 4));

        GeneratedSample g;
        switch (fam) {
            case TaskFamily::Count: g = make_count(rng, q); break;
            case TaskFamily::RelativePosition: g = make_relative_position(rng, q); break;
            case TaskFamily::AppearanceOrder: g = make_appearance_order(rng, q); break;
        }
        g.sample.regime = regime;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "-%06d", i);
        g.sample.sample_id = opt.id_prefix + family_name(fam) + idbuf;
        for (int v = 0; v < q; ++v) g.sample.images.push_back(render_view(g.scene, v, v));

        if (regime == Regime::SingleView) {
            for (auto& t : g.true_targets) t = 0;  // sole image
        } else if (regime == Regime::Interleaved) {
            // views 1..q-1 arrive interleaved, one before each later
            // observation step; targets follow the most-recent-image rule
            for (int v = 1; v < q; ++v) g.sample.interleaved_before_step[v] = v;
            for (size_t s = 0; s < g.true_targets.size(); ++s) {
                int cur = 0;
                for (auto& [step, img] : g.sample.interleaved_before_step)
                    if (step <= int(s)) cur = img;
                g.true_targets[size_t(s)] = cur;
            }
        }
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace valr
