"""Regenerate the synthetic demo fixture under data/.

Deterministic: running it twice gives byte-identical files.
"""

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
RNG = random.Random(20230807)

CATALOG = {
    "clothing": (["linen shirt", "wool cardigan", "denim jacket", "maxi dress", "hoodie", "kimono robe", "pleated skirt"],
                 ["oversized", "vintage", "embroidered", "cropped", "organic cotton", "hand-dyed", "boho"]),
    "accessories": (["silk scarf", "bucket hat", "leather belt", "hair clip", "sunglasses chain", "bandana", "beanie"],
                    ["floral", "minimalist", "retro", "tie-dye", "handwoven", "monogrammed", "pastel"]),
    "home and living": (["salt lamp", "throw pillow", "ceramic vase", "macrame wall hanging", "soy candle", "wooden tray", "linen tablecloth"],
                        ["himalayan", "rustic", "scandinavian", "handmade", "farmhouse", "terracotta", "hand-poured"]),
    "weddings": (["cake topper", "veil", "ring pillow", "guest book", "bridesmaid robe", "garter", "welcome sign"],
                 ["personalized", "lace", "gold foil", "rustic", "calligraphy", "pearl", "acrylic"]),
    "art and collectibles": (["watercolor print", "oil painting", "art poster", "ceramic figurine", "pet portrait", "linocut print", "botanical illustration"],
                             ["original", "abstract", "custom", "framed", "signed", "limited edition", "vintage"]),
    "craft supplies and tools": (["yarn bundle", "embroidery kit", "polymer clay set", "bead assortment", "fabric fat quarters", "stencil set", "knitting needles"],
                                 ["beginner", "merino", "pastel", "glass", "bamboo", "reusable", "cross stitch"]),
    "jewelry": (["pendant necklace", "stacking ring", "hoop earrings", "charm bracelet", "anklet", "signet ring", "birthstone necklace"],
                ["sterling silver", "14k gold", "dainty", "personalized", "opal", "moonstone", "hammered"]),
    "paper and party supplies": (["birthday banner", "greeting card", "wedding invitation", "party favor box", "sticker sheet", "planner insert", "gift tag"],
                                 ["printable", "kraft", "watercolor", "letterpress", "glitter", "holographic", "custom"]),
    "toys and games": (["wooden puzzle", "plush bear", "fire truck puzzle", "board game", "stacking blocks", "rag doll", "busy board"],
                       ["montessori", "handknit", "educational", "organic", "rainbow", "wooden", "personalized"]),
    "electronics and accessories": (["phone case", "laptop sleeve", "charging stand", "cable organizer", "airpods case", "tablet stand", "usb drive"],
                                    ["leather", "walnut", "clear", "felt", "magnetic", "engraved", "cork"]),
    "books movies and music": (["vinyl record", "poetry book", "recipe journal", "sheet music", "photo album", "audiobook code", "comic zine"],
                               ["signed", "handbound", "illustrated", "first edition", "leather bound", "indie", "rare"]),
    "bath and beauty": (["bath bomb", "lip balm", "face serum", "soap bar", "bath salt", "body butter", "shower steamer"],
                        ["lavender", "vegan", "goat milk", "rose", "eucalyptus", "unscented", "charcoal"]),
    "bags and purses": (["tote bag", "crossbody bag", "backpack", "clutch", "coin purse", "weekender bag", "fanny pack"],
                        ["canvas", "vegan leather", "crochet", "quilted", "waxed", "beaded", "woven"]),
    "shoes": (["ankle boots", "sandals", "moccasins", "espadrilles", "slippers", "sneakers", "clogs"],
              ["suede", "handmade", "barefoot", "felted", "platform", "leather", "embroidered"]),
    "pet supplies": (["dog collar", "cat bed", "pet bandana", "bird toy", "dog leash", "pet id tag", "cat tunnel"],
                     ["personalized", "waterproof", "hemp", "reflective", "plaid", "felt", "padded"]),
}

RECIPIENTS = ["mom", "dad", "her", "him", "kids", "grandma", "best friend", "teacher", "bride", "coworker", "toddler", "couples"]
SUFFIXES = ["gift for {r}", "for {r}", "set of 2", "with gift box", "custom name", "handcrafted", "small batch", "made to order"]
PRAISE = ["thoughtfully crafted", "made by hand in small batches", "designed to last for years", "finished with care",
          "a customer favorite", "sustainably sourced", "lovingly packaged", "inspected piece by piece"]
USES = ["everyday use", "gifting", "special occasions", "holiday seasons", "cozy evenings", "weekend trips", "daily rituals"]
QUERY_SHAPES = ["{s} {n}", "{n} for {r}", "{s} {n} for {r}", "{n} gift", "cheap {n}", "{s} {n} gift", "best {n} for {r}"]
ACTIONS = ["no_action"] * 15 + ["click"] * 45 + ["cart_add"] * 25 + ["purchase"] * 15


def records(n=500):
    titles, queries, out = set(), set(), []
    cats = list(CATALOG)
    while len(out) < n:
        cat = cats[len(out) % len(cats)]
        nouns, styles = CATALOG[cat]
        noun, style = RNG.choice(nouns), RNG.choice(styles)
        r = RNG.choice(RECIPIENTS)
        title = f"{style.title()} {noun.title()} {RNG.choice(SUFFIXES).format(r=r)}"
        if title.lower() in titles:
            continue
        titles.add(title.lower())
        rec = {"id": f"p{len(out):04d}", "title": title, "taxonomy": cat, "action": RNG.choice(ACTIONS)}
        if RNG.random() < 0.85:
            rec["description"] = (
                f"This {style} {noun} is {RNG.choice(PRAISE)}. Perfect for {RNG.choice(USES)}, "
                f"it makes a lovely present for {r}."
            )
        if RNG.random() < 0.8:
            for _ in range(10):
                q = RNG.choice(QUERY_SHAPES).format(s=RNG.choice(styles), n=noun, r=RNG.choice(RECIPIENTS))
                if q not in queries:
                    queries.add(q)
                    rec["query"] = q
                    break
        out.append(rec)
    return out


QA_TOPICS = ["order", "refund", "shipping label", "seller account", "listing", "payment method", "coupon code",
             "review", "gift card", "return request"]
QA_PATTERNS = [
    ("How do I cancel my {t}?", "Open Your Account, find the {t} under Purchases and Reviews, and choose Cancel. "
     "Cancellation is only possible before the seller marks it as dispatched."),
    ("Where can I see the status of my {t}?", "The status of every {t} is listed on the Purchases page. "
     "Select it to view the timeline and any messages from the shop."),
    ("Can I edit a {t} after submitting it?", "Yes, a submitted {t} can be edited within 48 hours from the same page "
     "where you created it. After that window it becomes read only."),
    ("Why was my {t} rejected?", "A {t} is rejected when it breaks the marketplace policies or has incomplete details. "
     "The rejection email lists the exact reason and how to fix it."),
    ("Who do I contact about a problem with my {t}?", "Message the shop first from the Help with Order button. "
     "If the issue with your {t} is not solved in three days, open a case with support."),
    ("Is there a fee for a {t}?", "Creating a {t} is free for buyers. Sellers pay the standard transaction fee only "
     "when a sale completes."),
    ("How long does a {t} take to process?", "Most of the time a {t} is processed within two business days. "
     "Holidays and bank checks can add up to a week."),
    ("Can I transfer my {t} to someone else?", "A {t} is tied to the account that created it and cannot be moved. "
     "You can close it and ask the other person to create their own."),
    ("What happens to my {t} if the shop closes?", "If a shop closes, any open {t} is handled by marketplace support, "
     "and eligible purchases are covered by the purchase protection program."),
]


def qa_pairs():
    out = []
    for pi, (q, a) in enumerate(QA_PATTERNS):
        for ti, t in enumerate(QA_TOPICS):
            out.append({"id": f"qa{pi}{ti}", "question": q.format(t=t), "answer": a.format(t=t)})
    return out


HELDOUT = {
    "scenarios": [
        {"kind": "festival", "name": "Christmas"},
        {"kind": "customer_group", "name": "sports fans"},
        {"kind": "sales_strategy", "name": "mid-year sale"},
    ],
    "product_sets": [
        ["Himalayan salt lamp", "bee house", "grow sunflower plant kit", "custom baby face mug", "puzzle plaque"],
        ["football fact print", "summer shorts", "basketball youth shirts", "swimming keychains", "energy chewing gum"],
        ["hunting knife", "green flame torch lighter", "personalized wallet", "custom face socks"],
    ],
    "intents": [
        "What products should I buy when planning my wedding?",
        "I'm looking for a gift for a middle-aged woman. Give me some ideas.",
        "I'm looking for a gift for a little kid. What should I choose between the \"fire truck puzzle\" and \"slim cigarette case\"?",
    ],
}


def ratings():
    out = []
    tasks = ["ads_generation", "title_rewriting"]
    weights = {"ads_generation": [45, 30, 18, 7], "title_rewriting": [55, 25, 15, 5]}
    for annotator in ["ann1", "ann2"]:
        for i in range(50):
            task = tasks[i % 2]
            rate = RNG.choices("ABCD", weights[task])[0]
            out.append({"annotator": annotator, "sample_id": f"{task}-s{i // 2:02d}", "task": task, "rate": rate})
    return out


# Published per-metric rows (raw PPL in position 9) and their GM.
TABLE_ROWS = [
    ("GPT-3.5", [16.76, 47.65, 0.56, 11.15, 26.08, 60.04, 9.10, 35.00, 120.86, 49.48, 49.23, 49.35, 19.58, 19.18, 19.38, 2.83, 14.41, 85.53], 15.06),
    ("GPT-2", [14.85, 25.03, 0.29, 6.83, 16.57, 39.48, 1.64, 19.98, 253.73, 87.50, 24.01, 33.18, 56.25, 6.33, 10.69, 2.14, 11.42, 85.66], 10.26),
    ("BART", [13.05, 36.04, 0.37, 8.37, 18.64, 41.40, 5.75, 20.33, 389.35, 73.75, 54.82, 62.39, 66.67, 47.97, 54.71, 3.32, 14.02, 86.02], 15.83),
    ("T5-base", [14.55, 37.96, 0.92, 9.10, 21.16, 53.42, 7.95, 23.82, 300.02, 40.04, 9.52, 9.62, 26.17, 9.98, 9.01, 3.25, 13.99, 85.33], 11.03),
    ("GPT-Neo", [12.93, 30.62, 0.97, 8.16, 21.43, 49.04, 7.21, 25.49, 306.83, 9.88, 5.86, 2.42, 2.61, 5.05, 1.61, 2.41, 10.10, 83.56], 6.65),
    ("LLaMA-7b", [10.05, 21.63, 0.77, 8.52, 12.00, 27.32, 3.22, 13.86, 206.71, 28.64, 4.29, 4.12, 9.64, 3.01, 2.29, 2.01, 11.17, 84.81], 6.31),
    ("LLaMA-13b", [6.31, 16.35, 0.75, 7.94, 15.28, 30.40, 3.35, 13.61, 181.54, 19.64, 1.78, 2.62, 13.62, 3.48, 4.79, 0.86, 11.53, 84.39], 5.72),
    ("LLaMA-30b", [12.67, 22.93, 0.91, 7.44, 18.03, 32.03, 3.15, 12.95, 159.18, 32.15, 6.12, 9.27, 11.54, 4.25, 5.73, 2.49, 11.38, 84.55], 7.79),
    ("ecom-tuned-7b", [15.18, 46.96, 0.45, 9.87, 18.88, 54.36, 4.66, 25.69, 132.86, 60.03, 63.80, 59.01, 59.52, 61.09, 59.71, 4.04, 15.86, 86.43], 17.41),
    ("ecom-tuned-13b", [13.08, 46.99, 0.32, 8.99, 15.07, 50.48, 4.15, 23.21, 152.23, 72.51, 68.92, 69.99, 72.87, 68.08, 69.62, 3.32, 12.36, 86.14], 16.77),
    ("ecom-tuned-30b", [14.23, 47.23, 0.41, 10.32, 15.96, 52.95, 4.27, 24.60, 177.75, 74.32, 73.16, 71.75, 74.51, 72.18, 70.53, 2.28, 13.29, 86.01], 17.28),
]


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")


def main():
    demo = ROOT / "data" / "demo"
    demo.mkdir(parents=True, exist_ok=True)
    write_jsonl(demo / "interactions.jsonl", records())
    write_jsonl(demo / "qa.jsonl", qa_pairs())
    (demo / "heldout.json").write_text(json.dumps(HELDOUT, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    write_jsonl(demo / "ratings.jsonl", ratings())
    replay = ROOT / "data" / "replay"
    replay.mkdir(parents=True, exist_ok=True)
    write_jsonl(replay / "published_rows.jsonl",
                [{"model": m, "values": v, "reported_gm": gm} for m, v, gm in TABLE_ROWS])


if __name__ == "__main__":
    main()
