use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::Parser;
use d4c_cli::{run, Cli, EXIT_INTERRUPTED};
use tracing::Level;

static CANCEL: AtomicBool = AtomicBool::new(false);

const DRAIN_NOTICE: &[u8] = b"interrupted: finishing in-flight runs (interrupt again to quit now)\n";

/// First SIGINT drains: no new bugs start, in-flight validations finish or time out. A second
/// one exits at once. Only async-signal-safe calls are made inside the handler.
extern "C" fn on_interrupt(_: libc::c_int) {
    if CANCEL.swap(true, Ordering::SeqCst) {
        unsafe { libc::_exit(EXIT_INTERRUPTED) };
    }
    unsafe { libc::write(libc::STDERR_FILENO, DRAIN_NOTICE.as_ptr().cast(), DRAIN_NOTICE.len()) };
}

fn install_interrupt_handler() {
    let handler = on_interrupt as extern "C" fn(libc::c_int);
    // SAFETY: the handler only touches an atomic and calls write/_exit.
    if unsafe { libc::signal(libc::SIGINT, handler as libc::sighandler_t) } == libc::SIG_ERR {
        tracing::warn!("cannot install interrupt handler");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => Level::WARN,
        1 => Level::INFO,
        2 => Level::DEBUG,
        _ => Level::TRACE,
    };
    tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).with_target(false).init();

    install_interrupt_handler();

    ExitCode::from(run(cli, &CANCEL) as u8)
}
