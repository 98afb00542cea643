//! Pinned (model, image, stream) triples under `tests/golden/`.

use std::fs;
use std::path::PathBuf;

use mgbvq::bitstream::{bit_accounting, parse_stream, HEADER_LEN, SECTION_FRAMING};
use mgbvq::io::{encode_pnm, read_raw};
use mgbvq::{decode, encode, train_model, Config, Model};

pub struct Case {
    pub name: &'static str,
    pub config: &'static str,
    pub corpus_seed: u64,
    pub image_seed: u64,
}

pub const CASES: [Case; 3] = [
    Case {
        name: "rgb64",
        config: "finest = 6\ndc_grid = 3\nchannels = 3\nmseth = 20\nseed = 5\nkmeans_iters = 20\n\
                 C_6_6 = 4,1\nC_6_5 = 8,-\nC_6_4 = 16,-\nC_5_5 = 4,1\nC_5_4 = 8,-\nC_4_4 = 4,1\nC_4_3 = 8,-\n",
        corpus_seed: 1,
        image_seed: 900,
    },
    Case {
        name: "gray32",
        config: "finest = 5\ndc_grid = 2\nchannels = 1\nmseth = 10\nseed = 8\nkmeans_iters = 15\n\
                 C_3_3 = 4,2\nC_3_2 = 8,-\nC_4_4 = 8,2\nC_4_3 = 8,-\nC_4_2 = 16,-\n\
                 C_5_5 = 8,2\nC_5_4 = 8,-\nC_5_3 = 16,-\nC_5_2 = 16,-\n",
        corpus_seed: 2,
        image_seed: 901,
    },
    Case {
        name: "open_loop64",
        config: "finest = 6\ndc_grid = 2\nchannels = 3\nmseth = 0\nfeedback = false\nseed = 3\nkmeans_iters = 10\n\
                 C_3_3 = 4,2\nC_3_2 = 8,-\nC_4_4 = 4,2\nC_4_3 = 8,-\nC_5_5 = 4,2\nC_5_4 = 8,-\nC_5_3 = 8,-\n\
                 C_6_6 = 4,2\nC_6_5 = 8,-\nC_6_4 = 16,-\nC_6_3 = 16,-\n",
        corpus_seed: 3,
        image_seed: 902,
    },
];

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn train(case: &Case) -> Model {
    let config = Config::parse(case.config).unwrap();
    let corpus = super::synthetic_corpus(40, 1 << config.finest, config.channels, case.corpus_seed);
    train_model(&corpus[..], &config).unwrap()
}

fn paths(case: &Case) -> [PathBuf; 4] {
    let dir = golden_dir();
    let ext = if case.name.starts_with("gray") { "pgm" } else { "ppm" };
    [
        dir.join(format!("{}.mgbm", case.name)),
        dir.join(format!("{}.{ext}", case.name)),
        dir.join(format!("{}.mgbv", case.name)),
        dir.join(format!("{}.decoded.{ext}", case.name)),
    ]
}

pub fn bless(case: &Case) {
    let model = train(case);
    let c = model.config();
    let img = super::synthetic(1 << c.finest, c.channels, case.image_seed);
    let stream = encode(&model, &img).unwrap();
    let out = decode(&model, &stream, None).unwrap();
    let [m, i, s, d] = paths(case);
    fs::create_dir_all(golden_dir()).unwrap();
    model.save(&m).unwrap();
    fs::write(i, encode_pnm(&img)).unwrap();
    fs::write(s, &stream).unwrap();
    fs::write(d, encode_pnm(&out)).unwrap();
}

pub fn check(case: &Case) {
    let [m, i, s, d] = paths(case);
    let model = Model::load(&m).unwrap();
    let img = read_raw(&i).unwrap().center_crop_pow2(1).unwrap();
    let golden_stream = fs::read(&s).unwrap();

    let stream = encode(&model, &img).unwrap();
    assert!(stream == golden_stream, "{}: stream differs from the golden file", case.name);
    let out = decode(&model, &stream, None).unwrap();
    assert!(encode_pnm(&out) == fs::read(&d).unwrap(), "{}: decoded image differs", case.name);
    assert!(train(case) == model, "{}: retraining does not reproduce the model", case.name);

    let acc = bit_accounting(&stream, &model).unwrap();
    assert_eq!(acc.total_bits(), 8 * (stream.len() - HEADER_LEN) as u64);

    // Every prefix that ends on a section boundary is itself a valid stream.
    let parsed = parse_stream(&stream).unwrap();
    let mut end = HEADER_LEN + parsed.dc.len();
    let cfg = model.config();
    let mut prefixes = vec![(cfg.dc_grid, end)];
    for &(n, body) in &parsed.sections {
        end += SECTION_FRAMING + body.len();
        prefixes.push((n, end));
    }
    assert_eq!(end, stream.len());
    for (n, end) in prefixes {
        let partial = decode(&model, &stream[..end], None).unwrap();
        let limited = decode(&model, &stream, Some(n)).unwrap();
        assert_eq!(partial, limited, "{}: prefix through G_{n}", case.name);
    }
}
