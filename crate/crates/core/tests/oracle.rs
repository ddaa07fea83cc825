//! Loss, logits and every parameter gradient of small fixed networks,
//! frozen from an independent float64 autograd implementation.

use highway::nn::{Body, Network};
use highway::{Activation, BodyKind, HighwayLayer, Matrix, PlainLayer};

struct Case {
    kind: BodyKind,
    activation: Activation,
    loss: f64,
    logits: &'static [f64],
    grads: &'static [&'static [f64]],
}

/// Deterministic small weights in {-0.9, ..., 0.9}.
fn fill(rows: usize, cols: usize, k0: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|k| ((((k0 * 7 + k) * 37) % 19) as f64 - 9.0) / 10.0)
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn build(kind: BodyKind, act: Activation) -> Network {
    let first = PlainLayer::new(fill(3, 4, 1), fill(1, 4, 2), act).unwrap();
    let body = match kind {
        BodyKind::Highway => Body::Highway(
            (0..2)
                .map(|l| {
                    let k = 3 + 4 * l;
                    let b_t = fill(1, 4, k + 3).map(|v| v - 1.0);
                    HighwayLayer::new(fill(4, 4, k), fill(1, 4, k + 1), fill(4, 4, k + 2), b_t, act).unwrap()
                })
                .collect(),
        ),
        BodyKind::Plain => Body::Plain(
            (0..2)
                .map(|l| PlainLayer::new(fill(4, 4, 3 + 4 * l), fill(1, 4, 4 + 4 * l), act).unwrap())
                .collect(),
        ),
    };
    let output = PlainLayer::new(fill(4, 3, 20), fill(1, 3, 21), Activation::Identity).unwrap();
    Network::new(first, body, output).unwrap()
}

const CASES: &[Case] = &[
    Case { kind: BodyKind::Highway, activation: Activation::Tanh, loss: 1.079768669580883,
        logits: &[-0.3088598204642807, -0.2148708379683375, -0.12088185547239438, -0.2713393166845896, -0.2188965869494081, -0.16645385721422656],
        grads: &[
            &[-0.021925308024712303, -0.022818813005814006, -0.007943517139773435, -0.004149983327125437, -0.003617429419718927, -0.006303777521894588, -0.0028930443458992875, -0.0013743009421187, -0.0025605508317732874, -0.004856624706785568, -0.002293734423218015, -0.001079952522842841],
            &[-0.010568785879456389, -0.014471528151090209, -0.0059930992268127274, -0.002943484192758591],
            &[-0.0013767698535461273, -0.0008599264150576478, -0.0016668354378533959, -0.008224506475393672, -0.00026939923205687407, -0.00026666223996835224, -0.0001844648928662778, -0.005110774113147079, 0.0004932027950839045, 0.00014159666816027309, 0.0008368144767380493, -0.002977092587113117, 0.0009704655896332756, 0.0003966094076229005, 0.001476671908018687, -0.001659191830128844],
            &[-0.0015386700478357334, -0.0006956767039751647, -0.0022449875627247413, 0.00025164236114899943],
            &[-0.0008639230163764954, -0.0004006862098889632, -0.0005930967477736591, -0.004752128018843329, -0.0006507542186674031, -0.00011824664748958356, 0.0004594772798884868, -0.0017972334843470823, -0.0005054146524500857, 7.613736118032972e-05, 0.0011860889934388922, 0.00023505344669774887, -0.0004168541748081286, 0.00019759126841809447, 0.001643692951706931, 0.0015026111259257952],
            &[0.00033363335177262195, -0.0003403506212835631, -0.0022150342359992577, -0.002971700024517177],
            &[-0.00430387584306641, -0.0018074915341998838, -0.0008133940702573007, -0.0006027558714110942, -0.0027033486684833554, -0.0012199811013055796, -0.00025055908921533057, -7.258601772240948e-05, -0.0013673230497162345, -0.0007099269614484035, 0.0001588799110232104, 0.000298994575508052, -0.0001814857713820267, -0.00023847790500142142, 0.00046468610512599804, 0.0005610937006060204],
            &[-0.00048426921428356903, 0.00017917465535353342, -0.0012679582196901558, -0.001450612151405828],
            &[-0.004228378478628983, -0.0007890045362196788, -0.003414145743019625, -0.00354906719750407, -0.003948732673195155, -0.0011570466204474095, -0.0023826138175388747, -0.002455700072202034, -0.0034154628523413847, -0.0013108558078978232, -0.0014663246358159758, -0.0014904989260239282, -0.002656088797273578, -0.0013010178908848787, -0.0006003515802311411, -0.0005836923697367162],
            &[0.005365994106739836, 0.0029001334221502267, 0.0006918389332679874, 0.0006239674071455547],
            &[0.0435501418176206, -0.1575215582626084, 0.11397141644498783, 0.0897694258763452, -0.22125072418269898, 0.13148129830635377, 0.04489134599337919, -0.11544349602738044, 0.07055215003400125, 0.04968666798345014, -0.08198770079656045, 0.03230103281311031],
            &[-0.190723739269355, 0.3326909550250726, -0.14196721575571766],
        ] },
    Case { kind: BodyKind::Highway, activation: Activation::Relu, loss: 1.1044700121720523,
        logits: &[-0.5187648615142483, -0.6514257647475968, -0.7840866679809454, -0.5187648615142483, -0.6514257647475968, -0.7840866679809454],
        grads: &[
            &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            &[0.002461269412744325, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            &[0.000147353162562225, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 6.498254398763805e-05, 5.9645090531803004e-05, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.001619251080239567, 0.0014862510968019623],
            &[-2.4120830027402777e-06, 0.0, 4.7106383589875906e-05, 3.887777012867704e-05, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            &[-6.0104879989889394e-05, 0.0, 0.001173808500458162, 0.0009687658779585747],
            &[-0.0038216649278963602, 0.010414685057329705, -0.0065930201294333475, 0.0, 0.0, 0.0, -0.019827516518620445, 0.05403334512743402, -0.03420582860881358, -0.01606717727790449, 0.0437857829680973, -0.027718605690192827],
            &[-0.12160214443753883, 0.3313864665027036, -0.20978432206516484],
        ] },
    Case { kind: BodyKind::Plain, activation: Activation::Tanh, loss: 1.1208522669046153,
        logits: &[-1.298778453654573, -1.4773831405159443, -1.6559878273773152, -1.3193097734592691, -1.4717729606348158, -1.6242361478103624],
        grads: &[
            &[0.016724940832807126, 0.009915712178532673, 0.005232607850697726, 0.0024291198624397364, 0.003059021741426106, 0.0015422133140306099, 0.00041988542744410664, -0.00012929262753024482, 0.0022118493451761994, 0.0010770633177905435, 0.00022829576598086825, -0.00017389670912712767],
            &[0.008471723962499067, 0.004651499962400665, 0.0019158966146323834, 0.0004460408159688285],
            &[0.005718806595660238, 0.027431953473383782, -0.003008646208861205, -0.027834526302648786, 0.002939865385989541, 0.02000113478462907, 0.001174281768178101, -0.023284326104595153, 0.0010316429435992655, 0.014928217495771482, 0.004060245795949764, -0.020204896841218373, -0.00015352421025390548, 0.011826258892539916, 0.005875158844623769, -0.018366484629919258],
            &[0.001480551955173711, -0.00880807109637479, -0.008117204376168648, 0.017000387229876762],
            &[-0.017246442095859273, -0.014277102611154746, -0.004569249734356115, -0.0045470633182965944, -0.012216207427610724, -0.011192266854616327, -0.0037897398822608745, -0.00407963700600284, -0.005775687882810571, -0.006813033307195797, -0.002571538913974984, -0.0031393957304150207, 0.0010795787191108584, -0.0019626170134116904, -0.0011779318356050414, -0.0019880833355556096],
            &[0.018178712769651457, 0.00792203837899004, 0.0011635264183740331, -0.0008778065491299464],
            &[0.10717758673620685, -0.17398558417215118, 0.06680799743594429, 0.05288441873723234, -0.1638801840261715, 0.11099576528893913, -0.08861946956233203, 0.28165160872218176, -0.19303213915984965, -0.07772936983040118, 0.27260502113674817, -0.19487565130634693],
            &[-0.11022276528096137, 0.33029123407011146, -0.22006846878915004],
        ] },
    Case { kind: BodyKind::Plain, activation: Activation::Relu, loss: 1.1215370358505432,
        logits: &[-1.117, -1.38, -1.6430000000000002, -1.117, -1.38, -1.6430000000000002],
        grads: &[
            &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            &[-0.012133932213636317, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0017334188876623334, 0.0017334188876623306, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.01733418887662333, 0.017334188876623302],
            &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -0.06631000248958847, 0.2834274482058008, -0.2171174457162122, -0.05792597918630717, 0.24759179383495242, -0.1896658146486451],
            &[-0.07621839366619365, 0.3257786760986216, -0.24956028243242778],
        ] },
];

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + b.abs())
}

#[test]
fn matches_autograd_reference() {
    let x = fill(2, 3, 0);
    let labels = [2, 0];
    for case in CASES {
        let net = build(case.kind, case.activation);
        let trace = net.forward(&x, &labels).unwrap();
        let tag = format!("{:?}/{:?}", case.kind, case.activation);
        assert!(close(trace.loss, case.loss), "{tag}: loss {} vs {}", trace.loss, case.loss);
        let logits = net.logits(&x, None).unwrap();
        for (a, b) in logits.as_slice().iter().zip(case.logits) {
            assert!(close(*a, *b), "{tag}: logit {a} vs {b}");
        }
        let grads = net.param_gradients(&trace, &labels).unwrap();
        let names = net.param_names();
        let tensors = grads.tensors();
        assert_eq!(tensors.len(), case.grads.len());
        for ((g, want), name) in tensors.iter().zip(case.grads).zip(&names) {
            assert_eq!(g.len(), want.len(), "{tag}: {name}");
            for (a, b) in g.as_slice().iter().zip(*want) {
                assert!(close(*a, *b), "{tag}: {name} gradient {a} vs {b}");
            }
        }
    }
}
