//! Stderr logging gated by the `CTXPARSE_LOG` environment variable:
//! `quiet`, `info` (default), or `debug`.

fn level() -> u8 {
    match std::env::var("CTXPARSE_LOG").as_deref() {
        Ok("quiet") => 0,
        Ok("debug") => 2,
        _ => 1,
    }
}

pub fn info(msg: impl AsRef<str>) {
    if level() >= 1 {
        eprintln!("{}", msg.as_ref());
    }
}

pub fn debug(msg: impl AsRef<str>) {
    if level() >= 2 {
        eprintln!("{}", msg.as_ref());
    }
}
