use std::fs::{self, File};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::os::unix::net::UnixListener;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Args;

use orgmarl::bridge::{Session, PROTO};
use orgmarl::experiment::RunConfig;
use orgmarl::guides::{Linkers, OrgDocument};
use orgmarl::org_model::OrgSpec;
use orgmarl::trajectory::{AgentId, LabelMap};

use crate::commands::read_json;

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Organization document.
    #[arg(long)]
    pub org: PathBuf,
    /// Run config whose environment pins the agent alphabets of the handshake.
    #[arg(long)]
    pub env_config: Option<PathBuf>,
    #[arg(long)]
    pub hardness: Option<f64>,
    /// Disable goal bonuses.
    #[arg(long)]
    pub agr: bool,
    /// `unix:/path/to.sock` or `host:port`.
    #[arg(long)]
    pub listen: String,
    /// Append every frame in both directions to this file.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Exit after the first connection closes.
    #[arg(long)]
    pub once: bool,
}

struct Layer {
    spec: Arc<OrgSpec>,
    linkers: Arc<Linkers>,
    expected: Option<Vec<(AgentId, LabelMap)>>,
}

fn layer(args: &ServeArgs) -> Result<Layer> {
    let text = fs::read_to_string(&args.org).with_context(|| format!("reading {}", args.org.display()))?;
    let doc = OrgDocument::from_json(&text).with_context(|| format!("parsing {}", args.org.display()))?;
    let diags = doc.spec.validate();
    if !diags.is_empty() {
        let list: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        bail!("{} is not a valid organization:\n{}", args.org.display(), list.join("\n"));
    }
    let mut linkers = doc.bind()?;
    if let Some(h) = args.hardness {
        if !(0.0..=1.0).contains(&h) {
            bail!("hardness {h} outside [0,1]");
        }
        linkers = linkers.with_hardness(h);
    }
    if args.agr {
        linkers = linkers.without_goals();
    }
    let expected = match &args.env_config {
        None => None,
        Some(p) => {
            let cfg: RunConfig = read_json(p)?;
            let env = cfg.env.build()?;
            Some(env.agents().iter().enumerate().map(|(i, a)| (a.clone(), env.labels(i).clone())).collect())
        }
    };
    Ok(Layer { spec: Arc::new(doc.spec), linkers: Arc::new(linkers), expected })
}

fn handle<S: Read + Write>(layer: &Layer, stream: S, transcript: &mut Option<File>) -> Result<()> {
    let mut session = Session::new(layer.spec.clone(), layer.linkers.clone(), layer.expected.clone());
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let frame = line.trim();
        if frame.is_empty() {
            continue;
        }
        let reply = session.handle_line(frame).to_line();
        if let Some(t) = transcript.as_mut() {
            writeln!(t, "> {frame}")?;
            writeln!(t, "< {reply}")?;
        }
        let out = reader.get_mut();
        writeln!(out, "{reply}")?;
        out.flush()?;
        if session.is_closed() {
            break;
        }
    }
    Ok(())
}

pub fn serve(args: &ServeArgs) -> Result<()> {
    let layer = layer(args)?;
    let mut transcript = match &args.transcript {
        Some(p) => Some(File::options().create(true).append(true).open(p).with_context(|| format!("opening {}", p.display()))?),
        None => None,
    };
    if let Some(path) = args.listen.strip_prefix("unix:") {
        let listener = UnixListener::bind(path).with_context(|| format!("binding {path}"))?;
        eprintln!("listening on unix:{path} (proto {PROTO})");
        for stream in listener.incoming() {
            handle(&layer, stream?, &mut transcript)?;
            if args.once {
                break;
            }
        }
        let _ = fs::remove_file(path);
    } else {
        let listener = TcpListener::bind(&args.listen).with_context(|| format!("binding {}", args.listen))?;
        eprintln!("listening on {} (proto {PROTO})", listener.local_addr()?);
        for stream in listener.incoming() {
            handle(&layer, stream?, &mut transcript)?;
            if args.once {
                break;
            }
        }
    }
    Ok(())
}
