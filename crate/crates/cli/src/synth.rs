use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{Context, Result};
use cband_core::ingest::{write_png_sequence, write_y4m, FrameRate};
use cband_core::synth::{severity_ladder, unique_levels, SynthSpec};

use crate::output::{self, require_file, usage, SCHEMA_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Y4m,
    Png,
    Both,
}

#[derive(clap::Args)]
pub struct Args {
    /// Stimulus spec JSON (width, height, gradient, low, high, bits, dither, seed)
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated, strictly decreasing bit depths [default: `bits` from --spec]
    #[arg(long, value_delimiter = ',')]
    pub bits: Vec<u8>,
    /// Frames per clip
    #[arg(long, default_value_t = 1)]
    pub frames: usize,
    /// Frame rate of Y4M clips
    #[arg(long, default_value_t = 30)]
    pub fps: u32,
    #[arg(long, value_enum, default_value = "y4m")]
    pub format: Format,
}

pub fn run(args: Args) -> Result<()> {
    let spec: SynthSpec = match &args.spec {
        Some(path) => {
            require_file(path, "spec")?;
            serde_json::from_str(&std::fs::read_to_string(path)?)
                .with_context(|| format!("reading {}", path.display()))?
        }
        None => SynthSpec::default(),
    };
    spec.validate()?;
    if args.frames == 0 || args.fps == 0 {
        return Err(usage("InvalidConfig", "--frames and --fps must be >= 1"));
    }
    let bits = if args.bits.is_empty() {
        vec![spec.bits]
    } else {
        args.bits.clone()
    };
    let ladder = severity_ladder(&spec, &bits)?;

    std::fs::create_dir_all(&args.out)?;
    output::write_json(&spec, Some(&args.out.join("spec.json")))?;
    let mut clips = Vec::new();
    for (frame, &b) in ladder.iter().zip(&bits) {
        let frames: Vec<_> = (0..args.frames)
            .map(|i| frame.clone().with_index(i))
            .collect();
        let mut entry = serde_json::json!({
            "bits": b,
            "unique_levels": unique_levels(frame.plane(0)),
        });
        if matches!(args.format, Format::Y4m | Format::Both) {
            let path = args.out.join(format!("bits{b}.y4m"));
            write_y4m(
                BufWriter::new(File::create(&path)?),
                &frames,
                FrameRate::new(args.fps, 1),
            )?;
            entry["y4m"] = serde_json::to_value(&path)?;
        }
        if matches!(args.format, Format::Png | Format::Both) {
            let dir = args.out.join(format!("bits{b}"));
            write_png_sequence(&dir, "frame", &frames)?;
            entry["png_dir"] = serde_json::to_value(&dir)?;
        }
        clips.push(entry);
    }
    output::write_json(
        &serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "out": args.out,
            "spec": spec,
            "frames": args.frames,
            "fps": args.fps,
            "clips": clips,
        }),
        None,
    )
}
